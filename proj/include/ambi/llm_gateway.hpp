#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ambi {

enum class Stage { Detect, Clarify, Refine, Merge, Generate };

std::string_view stage_label(Stage stage);
/// Throws ValidationError on an unknown label.
Stage parse_stage(std::string_view label);

struct DecodeParams {
    double temperature = 0.0;
    int max_output_tokens = 1024;

    bool operator==(const DecodeParams&) const = default;
};

struct PromptRequest {
    Stage stage = Stage::Detect;
    std::string system_text;
    std::string user_text;
    DecodeParams decode;

    bool operator==(const PromptRequest&) const = default;
};

struct Completion {
    std::string text;
    std::string backend_id;
    std::int64_t latency_ms = 0;
};

enum class BackendMode { Live, Scripted };

struct BackendConfig {
    BackendMode mode = BackendMode::Scripted;
    std::optional<std::string> base_url;
    std::optional<std::string> model_name;
    /// Name of the environment variable holding the API key, never the key.
    std::optional<std::string> api_key_ref;
    int timeout_ms = 30000;
    int max_retries = 2;
    std::optional<std::filesystem::path> script_path;
    int backoff_initial_ms = 250;
    /// Requests per second allowed through the gateway; 0 disables limiting.
    double rate_limit_per_sec = 0.0;

    /// Throws ValidationError when required fields for the mode are missing.
    void validate() const;

    /// Reads AMBI_LLM_MODE, AMBI_LLM_BASE_URL, AMBI_LLM_MODEL, AMBI_LLM_API_KEY,
    /// AMBI_LLM_TIMEOUT_MS and AMBI_SCRIPT_PATH. Unset mode means scripted.
    static BackendConfig from_env(const std::filesystem::path& default_script = {});
};

struct ScriptEntry {
    Stage stage = Stage::Detect;
    std::string match_substring;
    std::string response;
    bool consume_once = false;
};

/// Parses a JSON list of script entries; (stage, match_substring) must be unique.
std::vector<ScriptEntry> parse_script(const nlohmann::json& doc);
std::vector<ScriptEntry> load_script(const std::filesystem::path& path);

class Backend {
public:
    virtual ~Backend() = default;
    virtual Completion complete(const PromptRequest& request) = 0;
    virtual std::string id() const = 0;
};

/// Canned responses keyed by (stage, substring of user_text). The first
/// matching entry in file order wins; consume_once entries match at most once.
class ScriptedBackend final : public Backend {
public:
    explicit ScriptedBackend(std::vector<ScriptEntry> entries, std::string id = "scripted");

    Completion complete(const PromptRequest& request) override;
    std::string id() const override { return id_; }

private:
    std::vector<ScriptEntry> entries_;
    std::vector<bool> consumed_;
    std::string id_;
    std::mutex mutex_;
};

/// OpenAI-compatible chat-completion client.
class HttpChatBackend final : public Backend {
public:
    explicit HttpChatBackend(BackendConfig config);

    Completion complete(const PromptRequest& request) override;
    std::string id() const override;

private:
    BackendConfig config_;
    std::string scheme_host_port_;
    std::string path_prefix_;
};

/// Total outbound HTTP attempts made by this process through the live backend
/// or the external generator hook.
std::uint64_t network_call_count();
void note_network_call();

class TokenBucket {
public:
    explicit TokenBucket(double rate_per_sec, double burst = 1.0);
    /// Blocks until a token is available. No-op when rate is 0.
    void acquire();

private:
    double rate_;
    double burst_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mutex_;
};

enum class OutputKind { DetectionList, Clarification, SingleLine };

/// Extracts the first structured block of the expected kind. DetectionList
/// yields a JSON array of objects, Clarification an object with "question"
/// and "options", SingleLine a JSON string. Throws ParseFailure.
nlohmann::json parse_structured(const Completion& completion, OutputKind expected);

/// Single choke point for model calls. Thread-safe.
class LlmGateway {
public:
    explicit LlmGateway(std::shared_ptr<Backend> backend, double rate_limit_per_sec = 0.0);

    /// Scripted mode loads the script; live mode builds the HTTP client.
    static std::shared_ptr<LlmGateway> from_config(const BackendConfig& config);

    Completion complete(const PromptRequest& request);

    /// complete + parse_structured, re-issuing the request once with a repair
    /// instruction when the first reply does not parse.
    nlohmann::json complete_structured(const PromptRequest& request, OutputKind expected);

    std::uint64_t calls() const { return calls_.load(); }
    std::string backend_id() const { return backend_->id(); }

private:
    std::shared_ptr<Backend> backend_;
    TokenBucket limiter_;
    std::atomic<std::uint64_t> calls_{0};
};

/// One-shot convenience matching the gateway contract: builds a backend from
/// `config` and completes `request`.
Completion complete(const BackendConfig& config, const PromptRequest& request);

}  // namespace ambi
