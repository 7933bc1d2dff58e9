#pragma once

#include "ambi/engine.hpp"
#include "ambi/eval_harness.hpp"
#include "ambi/schema_catalog.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace httplib {
class Server;
}

namespace ambi {

enum class ApiErrorCode { NotFound, Conflict, Validation, Upstream, Internal };

class ApiError : public std::runtime_error {
public:
    ApiError(ApiErrorCode code, const std::string& message, nlohmann::json detail = nullptr)
        : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

    ApiErrorCode code() const { return code_; }
    const nlohmann::json& detail() const { return detail_; }
    int http_status() const;
    nlohmann::json body() const;

private:
    ApiErrorCode code_;
    nlohmann::json detail_;
};

std::string_view api_error_label(ApiErrorCode code);

/// In-memory sessions plus the example catalog. Endpoints lock the store
/// map briefly and then the single session they touch.
class ApiService {
public:
    ApiService(std::shared_ptr<const Disambiguator> engine, SchemaCatalog catalog,
               std::shared_ptr<SqlGenerator> generator, std::vector<EvalCase> examples = {});

    /// Body: {question, dialect, database_id, example_id?}.
    nlohmann::json create_session(const nlohmann::json& body);
    nlohmann::json get_session(const std::string& id) const;
    /// Body: {answers: [{question_id, selected_key}], additional_constraints: [text]}.
    nlohmann::json submit_answers(const std::string& id, const nlohmann::json& body);
    /// Hook results are cached per session; a side that failed is retried on
    /// the next call. Any failed side raises Upstream with the partial payload
    /// as detail.
    nlohmann::json get_result(const std::string& id);
    nlohmann::json list_examples() const;
    nlohmann::json list_databases() const;
    /// Body: {pred, gold, database_id?}.
    nlohmann::json compare(const nlohmann::json& body) const;

    std::size_t session_count() const;

private:
    struct SideResult {
        std::optional<std::string> sql;
        std::string error;
    };
    struct Entry {
        std::mutex mutex;
        Session session;
        std::optional<std::string> gold_sql;
        std::optional<std::string> example_id;
        SideResult with;
        SideResult without;
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    std::optional<std::filesystem::path> database_file(const std::string& database_id) const;

    std::shared_ptr<const Disambiguator> engine_;
    SchemaCatalog catalog_;
    std::shared_ptr<SqlGenerator> generator_;
    std::vector<EvalCase> examples_;
    mutable std::shared_mutex store_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::uint64_t next_id_ = 1;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> static_dir;
};

/// Routes the ApiService over HTTP. JSON in, JSON out; ApiError codes map to
/// 404/409/422/502/500.
class HttpApiServer {
public:
    HttpApiServer(ApiService& service, ServerOptions options);
    ~HttpApiServer();

    /// Binds and serves until stop(); returns false if the port can't be bound.
    bool listen();
    /// Binds to an ephemeral port and returns it, or -1.
    int bind_any_port();
    /// Serves on a socket bound by bind_any_port().
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

private:
    ApiService& service_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> server_;
};

/// Entry point behind the `ambi` binary. 0 success, 1 operational error,
/// 2 usage error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
             std::istream& in);

}  // namespace ambi
