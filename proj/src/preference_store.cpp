#include "ambi/preference_store.hpp"

#include "ambi/errors.hpp"
#include "ambi/llm_gateway.hpp"
#include "ambi/prompts.hpp"
#include "text_util.hpp"

#include <map>
#include <sstream>
#include <stdexcept>

namespace ambi {

using nlohmann::json;

bool PreferenceTree::empty() const {
    for (const auto& leaf : leaves) {
        if (!leaf.empty()) return false;
    }
    return true;
}

std::string normalize_target_key(std::string_view key) {
    std::string out;
    for (char c : trim(key)) {
        if (is_space(c)) {
            if (!out.empty() && out.back() != ' ') out.push_back(' ');
        } else {
            out.push_back(ascii_lower(c));
        }
    }
    return out;
}

PreferenceEntry merge(const PreferenceEntry& existing, const PreferenceEntry& incoming,
                      LlmGateway* gateway) {
    if (gateway == nullptr) return incoming;
    try {
        const json line =
            gateway->complete_structured(build_merge_prompt(existing, incoming), OutputKind::SingleLine);
        PreferenceEntry merged = incoming;
        merged.resolution = line.get<std::string>();
        return merged;
    } catch (const std::exception&) {
        return incoming;
    }
}

PreferenceTree record(PreferenceTree tree, AmbiguityCategory category, PreferenceEntry entry,
                      LlmGateway* gateway) {
    entry.target_key = normalize_target_key(entry.target_key);
    if (entry.target_key.empty()) {
        throw std::invalid_argument("preference entry needs a non-empty target_key");
    }
    auto& leaf = tree.leaf(category);
    PreferenceEntry* live = nullptr;
    for (PreferenceEntry& candidate : leaf) {
        if (!candidate.superseded && candidate.target_key == entry.target_key) {
            live = &candidate;
            break;
        }
    }
    if (live == nullptr) {
        entry.version = 1;
        entry.superseded = false;
        leaf.push_back(std::move(entry));
        return tree;
    }
    PreferenceEntry merged = merge(*live, entry, gateway);
    merged.target_key = entry.target_key;
    merged.source_question_id = entry.source_question_id;
    merged.version = live->version + 1;
    merged.superseded = false;
    live->superseded = true;
    leaf.push_back(std::move(merged));
    return tree;
}

std::vector<PreferenceEntry> lookup(const PreferenceTree& tree, AmbiguityCategory category) {
    std::vector<PreferenceEntry> out;
    for (const PreferenceEntry& entry : tree.leaf(category)) {
        if (!entry.superseded) out.push_back(entry);
    }
    return out;
}

json snapshot(const PreferenceTree& tree) {
    json doc = json::object();
    for (AmbiguityCategory category : kAllCategories) {
        json entries = json::array();
        for (const PreferenceEntry& e : tree.leaf(category)) {
            entries.push_back({{"target_key", e.target_key},
                               {"resolution", e.resolution},
                               {"version", e.version},
                               {"superseded", e.superseded},
                               {"source_question_id", e.source_question_id},
                               {"recorded_at", e.recorded_at}});
        }
        doc[std::string(category_label(category))] = std::move(entries);
    }
    return doc;
}

namespace {

PreferenceEntry load_entry(const json& item, const std::string& path) {
    if (!item.is_object()) throw ValidationError(path, "expected an object");
    auto string_field = [&](const char* key) {
        auto it = item.find(key);
        if (it == item.end() || !it->is_string()) {
            throw ValidationError(path + "." + key, "expected a string");
        }
        return it->get<std::string>();
    };
    PreferenceEntry entry;
    entry.target_key = string_field("target_key");
    if (entry.target_key.empty() || entry.target_key != normalize_target_key(entry.target_key)) {
        throw ValidationError(path + ".target_key", "must be non-empty and normalized");
    }
    entry.resolution = string_field("resolution");
    entry.source_question_id = string_field("source_question_id");
    entry.recorded_at = string_field("recorded_at");
    auto version = item.find("version");
    if (version == item.end() || !version->is_number_integer() || version->get<int>() < 1) {
        throw ValidationError(path + ".version", "expected a positive integer");
    }
    entry.version = version->get<int>();
    auto superseded = item.find("superseded");
    if (superseded == item.end() || !superseded->is_boolean()) {
        throw ValidationError(path + ".superseded", "expected a boolean");
    }
    entry.superseded = superseded->get<bool>();
    return entry;
}

}  // namespace

PreferenceTree load(const json& doc) {
    if (!doc.is_object()) throw ValidationError("", "preference snapshot must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        try {
            parse_category(key);
        } catch (const UnknownCategory&) {
            throw ValidationError(key, "unknown category key");
        }
        if (category_label(parse_category(key)) != key) {
            throw ValidationError(key, "category keys must use the serialized label");
        }
    }
    PreferenceTree tree;
    for (AmbiguityCategory category : kAllCategories) {
        const std::string label(category_label(category));
        auto it = doc.find(label);
        if (it == doc.end()) throw ValidationError(label, "missing category key");
        if (!it->is_array()) throw ValidationError(label, "expected a list of entries");
        auto& leaf = tree.leaf(category);
        // Per target: versions must run 1..n in order, only the newest live.
        std::map<std::string, std::size_t> last_index;
        for (std::size_t i = 0; i < it->size(); ++i) {
            const std::string path = label + "[" + std::to_string(i) + "]";
            PreferenceEntry entry = load_entry((*it)[i], path);
            auto prev = last_index.find(entry.target_key);
            const int expected = prev == last_index.end() ? 1 : leaf[prev->second].version + 1;
            if (entry.version != expected) {
                throw ValidationError(path + ".version",
                                      "expected version " + std::to_string(expected));
            }
            if (prev != last_index.end() && !leaf[prev->second].superseded) {
                throw ValidationError(path, "earlier version of '" + entry.target_key +
                                                "' is still live");
            }
            last_index[entry.target_key] = leaf.size();
            leaf.push_back(std::move(entry));
        }
        for (const auto& [target, index] : last_index) {
            if (leaf[index].superseded) {
                throw ValidationError(label, "newest version of '" + target + "' is superseded");
            }
        }
    }
    return tree;
}

std::string describe_live_preferences(const PreferenceTree& tree) {
    std::ostringstream out;
    for (AmbiguityCategory category : kAllCategories) {
        for (const PreferenceEntry& entry : lookup(tree, category)) {
            out << "- [" << category_label(category) << "] " << entry.target_key << ": "
                << entry.resolution << "\n";
        }
    }
    return out.str();
}

}  // namespace ambi
