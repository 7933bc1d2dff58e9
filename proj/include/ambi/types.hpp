#pragma once

#include "ambi/schema_catalog.hpp"
#include "ambi/taxonomy.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace ambi {

/// Half-open character range [start, end) into a question.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t length() const { return end > start ? end - start : 0; }
    bool operator==(const Span&) const = default;
};

inline std::size_t overlap_length(const Span& a, const Span& b) {
    const std::size_t lo = a.start > b.start ? a.start : b.start;
    const std::size_t hi = a.end < b.end ? a.end : b.end;
    return hi > lo ? hi - lo : 0;
}

struct DetectedAmbiguity {
    std::string id;
    std::string phrase;
    Span span;
    AmbiguityCategory category = AmbiguityCategory::UnclearSchemaReference;
    std::string rationale;
    std::vector<SchemaSnippet> evidence;

    bool operator==(const DetectedAmbiguity&) const = default;
};

struct ClarificationOption {
    std::string key;
    std::string display;
    /// Standalone sentence that can be inlined into a rewritten question.
    std::string resolution;
    std::optional<SchemaSnippet> snippet;

    bool operator==(const ClarificationOption&) const = default;
};

struct ClarificationQuestion {
    std::string id;
    std::string ambiguity_id;
    std::string text;
    std::vector<ClarificationOption> options;
    // Copied from the ambiguity so answers can be filed without a lookup.
    AmbiguityCategory category = AmbiguityCategory::UnclearSchemaReference;
    std::string phrase;
    Span span;

    const ClarificationOption* find_option(std::string_view key) const {
        for (const auto& option : options) {
            if (option.key == key) return &option;
        }
        return nullptr;
    }
    bool operator==(const ClarificationQuestion&) const = default;
};

struct UserAnswer {
    std::string question_id;
    std::string selected_key;

    bool operator==(const UserAnswer&) const = default;
};

struct PreferenceEntry {
    std::string target_key;
    std::string resolution;
    int version = 1;
    std::string source_question_id;
    std::string recorded_at;
    bool superseded = false;

    bool operator==(const PreferenceEntry&) const = default;
};

}  // namespace ambi
