#include "ambi/errors.hpp"
#include "ambi/llm_gateway.hpp"
#include "http_url.hpp"

#include <httplib.h>

#include <cstdlib>
#include <thread>

namespace ambi {

using nlohmann::json;

HttpChatBackend::HttpChatBackend(BackendConfig config) : config_(std::move(config)) {
    config_.validate();
    const SplitUrl url = split_url(*config_.base_url);
    scheme_host_port_ = url.scheme_host_port;
    path_prefix_ = url.path;
}

std::string HttpChatBackend::id() const { return "live:" + config_.model_name.value_or("?"); }

Completion HttpChatBackend::complete(const PromptRequest& request) {
    const json body = {
        {"model", *config_.model_name},
        {"messages",
         json::array({{{"role", "system"}, {"content", request.system_text}},
                      {{"role", "user"}, {"content", request.user_text}}})},
        {"temperature", request.decode.temperature},
        {"max_tokens", request.decode.max_output_tokens},
    };
    const std::string payload = body.dump();
    const std::string path = path_prefix_ + "/chat/completions";

    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_ref->c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    std::string last_error;
    const auto start = std::chrono::steady_clock::now();
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(config_.backoff_initial_ms * (1 << (attempt - 1))));
        }
        httplib::Client client(scheme_host_port_);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        note_network_call();
        auto result = client.Post(path, headers, payload, "application/json");
        if (!result) {
            last_error = "transport error: " + httplib::to_string(result.error());
            continue;
        }
        if (result->status >= 500 || result->status == 429) {
            last_error = "HTTP " + std::to_string(result->status);
            continue;
        }
        if (result->status != 200) {
            throw BackendUnavailable("chat completion rejected with HTTP " +
                                     std::to_string(result->status) + ": " +
                                     result->body.substr(0, 200));
        }
        try {
            const json reply = json::parse(result->body);
            Completion completion;
            completion.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
            completion.backend_id = id();
            completion.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                        std::chrono::steady_clock::now() - start)
                                        .count();
            return completion;
        } catch (const json::exception& e) {
            throw BackendUnavailable(std::string("malformed chat completion response: ") + e.what());
        }
    }
    throw BackendUnavailable("chat completion failed after " +
                             std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
}

}  // namespace ambi
