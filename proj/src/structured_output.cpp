#include "ambi/errors.hpp"
#include "ambi/llm_gateway.hpp"
#include "text_util.hpp"

#include <optional>

namespace ambi {

using nlohmann::json;

namespace {

// Contents of ``` fenced blocks, in order of appearance.
std::vector<std::string> fenced_blocks(const std::string& text) {
    std::vector<std::string> blocks;
    std::size_t pos = 0;
    while ((pos = text.find("```", pos)) != std::string::npos) {
        std::size_t body = text.find('\n', pos + 3);
        if (body == std::string::npos) break;
        const std::size_t close = text.find("```", body + 1);
        if (close == std::string::npos) break;
        blocks.push_back(text.substr(body + 1, close - body - 1));
        pos = close + 3;
    }
    return blocks;
}

// Finds the end of a bracketed JSON value starting at `open`, honoring strings.
std::optional<std::size_t> balanced_end(const std::string& text, std::size_t open) {
    std::vector<char> stack;
    bool in_string = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '[' || c == '{') {
            stack.push_back(c == '[' ? ']' : '}');
        } else if (c == ']' || c == '}') {
            if (stack.empty() || stack.back() != c) return std::nullopt;
            stack.pop_back();
            if (stack.empty()) return i;
        }
    }
    return std::nullopt;
}

std::vector<json> json_candidates(const std::string& text) {
    std::vector<json> out;
    for (const std::string& block : fenced_blocks(text)) {
        json parsed = json::parse(block, nullptr, false);
        if (!parsed.is_discarded()) out.push_back(std::move(parsed));
    }
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '[' && text[i] != '{') continue;
        auto end = balanced_end(text, i);
        if (!end) continue;
        json parsed = json::parse(text.substr(i, *end - i + 1), nullptr, false);
        if (!parsed.is_discarded()) {
            out.push_back(std::move(parsed));
            i = *end;
        }
    }
    return out;
}

std::optional<json> as_detection_list(const json& value) {
    const json* list = &value;
    if (value.is_object()) {
        auto it = value.find("ambiguities");
        if (it == value.end()) return std::nullopt;
        list = &*it;
    }
    if (!list->is_array()) return std::nullopt;
    for (const json& item : *list) {
        if (!item.is_object()) return std::nullopt;
    }
    return std::optional<json>(std::in_place, *list);
}

std::optional<json> as_clarification(const json& value) {
    if (!value.is_object()) return std::nullopt;
    auto question = value.find("question");
    auto options = value.find("options");
    if (question == value.end() || !question->is_string()) return std::nullopt;
    if (options == value.end() || !options->is_array()) return std::nullopt;
    for (const json& option : *options) {
        if (!option.is_object()) return std::nullopt;
    }
    return std::optional<json>(std::in_place, value);
}

std::optional<std::string> as_single_line(const std::string& text) {
    std::string source = text;
    if (auto blocks = fenced_blocks(text); !blocks.empty()) source = blocks.front();
    std::size_t pos = 0;
    while (pos <= source.size()) {
        std::size_t nl = source.find('\n', pos);
        if (nl == std::string::npos) nl = source.size();
        std::string line(trim(std::string_view(source).substr(pos, nl - pos)));
        pos = nl + 1;
        if (line.empty()) continue;
        if (line.size() >= 2 && line.front() == '"' && line.back() == '"') {
            json parsed = json::parse(line, nullptr, false);
            if (parsed.is_string()) line = parsed.get<std::string>();
        }
        line = std::string(trim(line));
        if (!line.empty()) return line;
    }
    return std::nullopt;
}

}  // namespace

json parse_structured(const Completion& completion, OutputKind expected) {
    if (expected == OutputKind::SingleLine) {
        if (auto line = as_single_line(completion.text)) return *line;
        throw ParseFailure("expected a single line of text, got an empty reply");
    }
    for (const json& candidate : json_candidates(completion.text)) {
        std::optional<json> shaped = expected == OutputKind::DetectionList
                                         ? as_detection_list(candidate)
                                         : as_clarification(candidate);
        if (shaped) return *shaped;
    }
    throw ParseFailure(std::string("no ") +
                       (expected == OutputKind::DetectionList ? "detection list"
                                                              : "clarification question") +
                       " found in reply: " + completion.text.substr(0, 120));
}

}  // namespace ambi
