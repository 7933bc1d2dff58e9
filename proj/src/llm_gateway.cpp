#include "ambi/llm_gateway.hpp"

#include "ambi/errors.hpp"
#include "text_util.hpp"

#include <array>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>
#include <utility>

namespace ambi {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 5> kStageLabels = {"detect", "clarify", "refine", "merge",
                                                          "generate"};

std::optional<std::string> env(const char* name) {
    const char* value = std::getenv(name);
    if (!value || !*value) return std::nullopt;
    return std::string(value);
}

std::atomic<std::uint64_t> g_network_calls{0};

}  // namespace

std::string_view stage_label(Stage stage) { return kStageLabels[static_cast<std::size_t>(stage)]; }

Stage parse_stage(std::string_view label) {
    const std::string lower = to_lower(trim(label));
    for (std::size_t i = 0; i < kStageLabels.size(); ++i) {
        if (lower == kStageLabels[i]) return static_cast<Stage>(i);
    }
    throw ValidationError("stage", "unknown stage '" + std::string(label) + "'");
}

void BackendConfig::validate() const {
    if (timeout_ms <= 0) throw ValidationError("timeout_ms", "must be positive");
    if (max_retries < 0) throw ValidationError("max_retries", "must be non-negative");
    if (mode == BackendMode::Live) {
        if (!base_url || base_url->empty()) throw ValidationError("base_url", "required in live mode");
        if (!model_name || model_name->empty()) {
            throw ValidationError("model_name", "required in live mode");
        }
        if (!api_key_ref || api_key_ref->empty()) {
            throw ValidationError("api_key_ref", "required in live mode");
        }
    } else if (!script_path || script_path->empty()) {
        throw ValidationError("script_path", "required in scripted mode");
    }
}

BackendConfig BackendConfig::from_env(const std::filesystem::path& default_script) {
    BackendConfig config;
    const std::string mode = to_lower(env("AMBI_LLM_MODE").value_or("scripted"));
    if (mode == "live") {
        config.mode = BackendMode::Live;
    } else if (mode == "scripted") {
        config.mode = BackendMode::Scripted;
    } else {
        throw ValidationError("AMBI_LLM_MODE", "expected 'live' or 'scripted', got '" + mode + "'");
    }
    config.base_url = env("AMBI_LLM_BASE_URL");
    config.model_name = env("AMBI_LLM_MODEL");
    if (env("AMBI_LLM_API_KEY")) config.api_key_ref = "AMBI_LLM_API_KEY";
    if (auto timeout = env("AMBI_LLM_TIMEOUT_MS")) {
        try {
            config.timeout_ms = std::stoi(*timeout);
        } catch (const std::exception&) {
            throw ValidationError("AMBI_LLM_TIMEOUT_MS", "not an integer: '" + *timeout + "'");
        }
    }
    if (auto script = env("AMBI_SCRIPT_PATH")) {
        config.script_path = *script;
    } else if (!default_script.empty()) {
        config.script_path = default_script;
    }
    return config;
}

std::vector<ScriptEntry> parse_script(const json& doc) {
    if (!doc.is_array()) throw ValidationError("", "script must be a JSON list");
    std::vector<ScriptEntry> entries;
    std::set<std::pair<Stage, std::string>> seen;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const std::string path = "[" + std::to_string(i) + "]";
        const json& item = doc[i];
        if (!item.is_object()) throw ValidationError(path, "expected an object");
        auto field = [&](const char* key) -> const json& {
            auto it = item.find(key);
            if (it == item.end() || !it->is_string()) {
                throw ValidationError(path + "." + key, "expected a string");
            }
            return *it;
        };
        ScriptEntry entry;
        try {
            entry.stage = parse_stage(field("stage").get<std::string>());
        } catch (const ValidationError& e) {
            throw ValidationError(path + ".stage", e.what());
        }
        entry.match_substring = field("match_substring").get<std::string>();
        entry.response = field("response").get<std::string>();
        if (auto it = item.find("consume_once"); it != item.end()) {
            if (!it->is_boolean()) throw ValidationError(path + ".consume_once", "expected a boolean");
            entry.consume_once = it->get<bool>();
        }
        if (!seen.emplace(entry.stage, entry.match_substring).second) {
            throw ValidationError(path, "duplicate (stage, match_substring) pair");
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

std::vector<ScriptEntry> load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open script");
    try {
        return parse_script(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ValidationError("", path.string() + ": invalid JSON: " + e.what());
    }
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries, std::string id)
    : entries_(std::move(entries)), consumed_(entries_.size(), false), id_(std::move(id)) {}

Completion ScriptedBackend::complete(const PromptRequest& request) {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const ScriptEntry& entry = entries_[i];
        if (entry.stage != request.stage || consumed_[i]) continue;
        if (request.user_text.find(entry.match_substring) == std::string::npos) continue;
        if (entry.consume_once) consumed_[i] = true;
        return {entry.response, id_, 0};
    }
    std::string excerpt = request.user_text.substr(0, 160);
    throw NoScriptMatch("no script entry for stage '" + std::string(stage_label(request.stage)) +
                        "' matches: " + excerpt);
}

std::uint64_t network_call_count() { return g_network_calls.load(); }
void note_network_call() { g_network_calls.fetch_add(1); }

TokenBucket::TokenBucket(double rate_per_sec, double burst)
    : rate_(rate_per_sec), burst_(burst), tokens_(burst), last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock lock(mutex_);
    for (;;) {
        const auto now = std::chrono::steady_clock::now();
        const double elapsed = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        const double wait_s = (1.0 - tokens_) / rate_;
        lock.unlock();
        std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
        lock.lock();
    }
}

LlmGateway::LlmGateway(std::shared_ptr<Backend> backend, double rate_limit_per_sec)
    : backend_(std::move(backend)), limiter_(rate_limit_per_sec) {}

std::shared_ptr<LlmGateway> LlmGateway::from_config(const BackendConfig& config) {
    config.validate();
    std::shared_ptr<Backend> backend;
    if (config.mode == BackendMode::Scripted) {
        backend = std::make_shared<ScriptedBackend>(load_script(*config.script_path));
    } else {
        backend = std::make_shared<HttpChatBackend>(config);
    }
    return std::make_shared<LlmGateway>(std::move(backend), config.rate_limit_per_sec);
}

Completion LlmGateway::complete(const PromptRequest& request) {
    limiter_.acquire();
    calls_.fetch_add(1);
    const auto start = std::chrono::steady_clock::now();
    Completion completion = backend_->complete(request);
    if (completion.latency_ms == 0) {
        completion.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                    std::chrono::steady_clock::now() - start)
                                    .count();
    }
    return completion;
}

namespace {

std::string_view repair_instruction(OutputKind kind) {
    switch (kind) {
        case OutputKind::DetectionList:
            return "Reply with only a JSON list of objects with the keys \"phrase\", "
                   "\"category\" and \"rationale\". Use [] when nothing is ambiguous.";
        case OutputKind::Clarification:
            return "Reply with only a JSON object with the keys \"question\" and \"options\"; "
                   "each option needs \"display\" and \"resolution\".";
        case OutputKind::SingleLine:
            return "Reply with exactly one line of plain text and nothing else.";
    }
    return "";
}

}  // namespace

json LlmGateway::complete_structured(const PromptRequest& request, OutputKind expected) {
    Completion first = complete(request);
    try {
        return parse_structured(first, expected);
    } catch (const ParseFailure&) {
    }
    PromptRequest repair = request;
    repair.user_text += "\n\nREPAIR: your previous reply could not be parsed. ";
    repair.user_text += repair_instruction(expected);
    return parse_structured(complete(repair), expected);
}

Completion complete(const BackendConfig& config, const PromptRequest& request) {
    return LlmGateway::from_config(config)->complete(request);
}

}  // namespace ambi
