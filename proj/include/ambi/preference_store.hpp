#pragma once

#include "ambi/taxonomy.hpp"
#include "ambi/types.hpp"

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ambi {

class LlmGateway;

/// User clarifications filed under the taxonomy leaf they resolve. Each leaf
/// keeps full history; at most one entry per target_key is live.
struct PreferenceTree {
    std::array<std::vector<PreferenceEntry>, kCategoryCount> leaves;

    const std::vector<PreferenceEntry>& leaf(AmbiguityCategory category) const {
        return leaves[category_index(category)];
    }
    std::vector<PreferenceEntry>& leaf(AmbiguityCategory category) {
        return leaves[category_index(category)];
    }
    bool empty() const;
    bool operator==(const PreferenceTree&) const = default;
};

/// Lowercased and trimmed, with inner whitespace runs collapsed.
std::string normalize_target_key(std::string_view key);

/// Files `entry` under `category`. A live entry with the same target_key is
/// merged with it (see merge) and superseded. `gateway` may be null, which
/// selects the deterministic latest-wins merge.
PreferenceTree record(PreferenceTree tree, AmbiguityCategory category, PreferenceEntry entry,
                      LlmGateway* gateway);

/// LLM-assisted merge of two preferences on the same target. Never fails:
/// any gateway or parse error falls back to returning `incoming`.
PreferenceEntry merge(const PreferenceEntry& existing, const PreferenceEntry& incoming,
                      LlmGateway* gateway);

/// Live entries of one leaf in insertion order.
std::vector<PreferenceEntry> lookup(const PreferenceTree& tree, AmbiguityCategory category);

nlohmann::json snapshot(const PreferenceTree& tree);
/// Throws ValidationError on malformed documents, including ones that break
/// the single-live-entry or version-sequence invariants.
PreferenceTree load(const nlohmann::json& doc);

/// Compact "category / target: resolution" listing of live entries, used as
/// context for re-detection.
std::string describe_live_preferences(const PreferenceTree& tree);

}  // namespace ambi
