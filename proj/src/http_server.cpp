#include "ambi/errors.hpp"
#include "ambi/interface.hpp"

#include <httplib.h>

#include <functional>

namespace ambi {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw ApiError(ApiErrorCode::Validation, std::string("malformed JSON body: ") + e.what());
    }
}

using Handler = std::function<json(const httplib::Request&)>;

httplib::Server::Handler wrap(Handler handler, int ok_status = 200) {
    return [handler = std::move(handler), ok_status](const httplib::Request& req, httplib::Response& res) {
        try {
            send_json(res, ok_status, handler(req));
        } catch (const ApiError& e) {
            send_json(res, e.http_status(), e.body());
        } catch (const std::exception& e) {
            send_json(res, 500, ApiError(ApiErrorCode::Internal, e.what()).body());
        }
    };
}

}  // namespace

HttpApiServer::HttpApiServer(ApiService& service, ServerOptions options)
    : service_(service), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    auto& s = *server_;
    s.Post("/sessions", wrap([this](const httplib::Request& req) {
        return service_.create_session(parse_body(req));
    }, 201));
    s.Get(R"(/sessions/([^/]+))", wrap([this](const httplib::Request& req) {
        return service_.get_session(req.matches[1]);
    }));
    s.Post(R"(/sessions/([^/]+)/answers)", wrap([this](const httplib::Request& req) {
        return service_.submit_answers(req.matches[1], parse_body(req));
    }));
    s.Get(R"(/sessions/([^/]+)/result)", wrap([this](const httplib::Request& req) {
        return service_.get_result(req.matches[1]);
    }));
    s.Get("/examples", wrap([this](const httplib::Request&) { return service_.list_examples(); }));
    s.Get("/databases", wrap([this](const httplib::Request&) { return service_.list_databases(); }));
    s.Post("/compare", wrap([this](const httplib::Request& req) {
        return service_.compare(parse_body(req));
    }));
    if (options_.static_dir) s.set_mount_point("/", options_.static_dir->string());
}

HttpApiServer::~HttpApiServer() { stop(); }

bool HttpApiServer::listen() { return server_->listen(options_.host, options_.port); }

int HttpApiServer::bind_any_port() { return server_->bind_to_any_port(options_.host); }

bool HttpApiServer::listen_after_bind() { return server_->listen_after_bind(); }

void HttpApiServer::stop() {
    if (server_) server_->stop();
}

void HttpApiServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace ambi
