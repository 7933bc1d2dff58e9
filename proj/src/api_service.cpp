#include "ambi/errors.hpp"
#include "ambi/interface.hpp"
#include "ambi/sql_eval.hpp"
#include "text_util.hpp"

#include <cstdio>

namespace ambi {

using nlohmann::json;

std::string_view api_error_label(ApiErrorCode code) {
    switch (code) {
        case ApiErrorCode::NotFound: return "not_found";
        case ApiErrorCode::Conflict: return "conflict";
        case ApiErrorCode::Validation: return "validation";
        case ApiErrorCode::Upstream: return "upstream";
        case ApiErrorCode::Internal: return "internal";
    }
    return "internal";
}

int ApiError::http_status() const {
    switch (code_) {
        case ApiErrorCode::NotFound: return 404;
        case ApiErrorCode::Conflict: return 409;
        case ApiErrorCode::Validation: return 422;
        case ApiErrorCode::Upstream: return 502;
        case ApiErrorCode::Internal: return 500;
    }
    return 500;
}

json ApiError::body() const {
    return {{"error", {{"code", api_error_label(code_)}, {"message", what()}, {"detail", detail_}}}};
}

namespace {

std::string string_field(const json& body, const char* key, bool required) {
    auto it = body.find(key);
    if (it == body.end() || it->is_null()) {
        if (required) throw ApiError(ApiErrorCode::Validation, std::string("missing field '") + key + "'");
        return {};
    }
    if (!it->is_string()) {
        throw ApiError(ApiErrorCode::Validation, std::string("field '") + key + "' must be a string");
    }
    return it->get<std::string>();
}

void require_object(const json& body) {
    if (!body.is_object()) throw ApiError(ApiErrorCode::Validation, "request body must be a JSON object");
}

}  // namespace

ApiService::ApiService(std::shared_ptr<const Disambiguator> engine, SchemaCatalog catalog,
                       std::shared_ptr<SqlGenerator> generator, std::vector<EvalCase> examples)
    : engine_(std::move(engine)),
      catalog_(std::move(catalog)),
      generator_(std::move(generator)),
      examples_(std::move(examples)) {
    if (!engine_) throw std::invalid_argument("ApiService needs an engine");
}

std::shared_ptr<ApiService::Entry> ApiService::find(const std::string& id) const {
    std::shared_lock lock(store_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ApiError(ApiErrorCode::NotFound, "no session '" + id + "'");
    return it->second;
}

std::size_t ApiService::session_count() const {
    std::shared_lock lock(store_mutex_);
    return sessions_.size();
}

std::optional<std::filesystem::path> ApiService::database_file(const std::string& database_id) const {
    auto model = catalog_.find(database_id);
    if (model && model->source.kind == SchemaSourceKind::DatabaseFile) return model->source.path;
    return std::nullopt;
}

json ApiService::create_session(const json& body) {
    require_object(body);
    std::string question = string_field(body, "question", false);
    std::string database_id = string_field(body, "database_id", false);
    std::string dialect = string_field(body, "dialect", false);
    const std::string example_id = string_field(body, "example_id", false);

    const EvalCase* example = nullptr;
    if (!example_id.empty()) {
        for (const EvalCase& c : examples_) {
            if (c.id == example_id) example = &c;
        }
        if (!example) throw ApiError(ApiErrorCode::NotFound, "no example '" + example_id + "'");
        if (question.empty()) question = example->question;
        if (database_id.empty()) database_id = example->database_id;
    } else {
        for (const EvalCase& c : examples_) {
            if (c.question == question && c.database_id == database_id) example = &c;
        }
    }
    if (trim(question).empty()) throw ApiError(ApiErrorCode::Validation, "question must not be empty");
    if (database_id.empty()) throw ApiError(ApiErrorCode::Validation, "missing field 'database_id'");
    auto schema = catalog_.find(database_id);
    if (!schema) throw ApiError(ApiErrorCode::NotFound, "unknown database '" + database_id + "'");
    if (dialect.empty()) dialect = schema->dialect.empty() ? "sqlite" : schema->dialect;

    auto entry = std::make_shared<Entry>();
    {
        std::unique_lock lock(store_mutex_);
        char id[32];
        std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(next_id_++));
        entry->session = engine_->start_session(id, question, schema, dialect);
        sessions_.emplace(id, entry);
    }
    if (example) {
        entry->gold_sql = example->gold_sql;
        entry->example_id = example->id;
    }
    std::lock_guard session_lock(entry->mutex);
    engine_->begin(entry->session);
    json summary = session_summary(entry->session);
    if (entry->session.state == SessionState::Failed) {
        throw ApiError(ApiErrorCode::Upstream, "disambiguation failed: " + entry->session.failure_reason,
                       summary);
    }
    return summary;
}

json ApiService::get_session(const std::string& id) const {
    auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    return session_summary(entry->session);
}

json ApiService::submit_answers(const std::string& id, const json& body) {
    require_object(body);
    std::vector<UserAnswer> answers;
    std::vector<std::string> constraints;
    if (auto it = body.find("answers"); it != body.end() && !it->is_null()) {
        if (!it->is_array()) throw ApiError(ApiErrorCode::Validation, "'answers' must be a list");
        for (const json& item : *it) {
            if (!item.is_object()) throw ApiError(ApiErrorCode::Validation, "each answer must be an object");
            answers.push_back({string_field(item, "question_id", true), string_field(item, "selected_key", true)});
        }
    }
    if (auto it = body.find("additional_constraints"); it != body.end() && !it->is_null()) {
        if (!it->is_array()) {
            throw ApiError(ApiErrorCode::Validation, "'additional_constraints' must be a list");
        }
        for (const json& item : *it) {
            if (!item.is_string()) throw ApiError(ApiErrorCode::Validation, "constraints must be strings");
            constraints.push_back(item.get<std::string>());
        }
    }
    auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    try {
        engine_->apply_answers(entry->session, answers, constraints);
    } catch (const InvalidState& e) {
        throw ApiError(ApiErrorCode::Conflict, e.what());
    } catch (const StaleAnswer& e) {
        throw ApiError(ApiErrorCode::Validation, e.what());
    } catch (const InvalidAnswer& e) {
        throw ApiError(ApiErrorCode::Validation, e.what());
    }
    return session_summary(entry->session);
}

json ApiService::get_result(const std::string& id) {
    auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    const Session& session = entry->session;
    if (session.state != SessionState::Resolved) {
        throw ApiError(ApiErrorCode::Conflict,
                       "session is " + std::string(session_state_label(session.state)) + ", not resolved");
    }
    auto fill = [&](SideResult& side, const std::string& question) {
        if (side.sql) return;
        if (!generator_) {
            side.error = "no SQL generator configured";
            return;
        }
        try {
            side.sql = generator_->generate(question, *session.schema, session.dialect);
            side.error.clear();
        } catch (const std::exception& e) {
            side.error = e.what();
        }
    };
    fill(entry->without, session.original_question);
    fill(entry->with, session.rewritten_question);

    auto side_json = [](const SideResult& side) {
        return side.sql ? json{{"sql", *side.sql}, {"error", nullptr}}
                        : json{{"sql", nullptr}, {"error", side.error}};
    };
    json payload = {{"session_id", session.id},
                    {"original_question", session.original_question},
                    {"rewritten_question", session.rewritten_question},
                    {"preference_snapshot", snapshot(session.preference_tree)},
                    {"generated_sql_with", side_json(entry->with)},
                    {"generated_sql_without", side_json(entry->without)},
                    {"gold_sql", entry->gold_sql ? json(*entry->gold_sql) : json(nullptr)},
                    {"comparison", nullptr}};
    if (entry->gold_sql) {
        const auto db = database_file(session.schema->database_id);
        json comparison = json::object();
        if (entry->with.sql) {
            comparison["with_disambiguation"] = to_json(compare_sql(*entry->with.sql, *entry->gold_sql, db));
        }
        if (entry->without.sql) {
            comparison["without_disambiguation"] =
                to_json(compare_sql(*entry->without.sql, *entry->gold_sql, db));
        }
        payload["comparison"] = std::move(comparison);
    }
    if (!entry->with.sql || !entry->without.sql) {
        throw ApiError(ApiErrorCode::Upstream, "SQL generation failed for at least one side", payload);
    }
    return payload;
}

json ApiService::list_examples() const {
    json out = json::array();
    for (const EvalCase& c : examples_) {
        out.push_back({{"id", c.id},
                       {"label", c.id + ": " + c.question},
                       {"source", case_source_label(c.source)},
                       {"question", c.question},
                       {"database_id", c.database_id},
                       {"dialect", "sqlite"},
                       {"has_gold", true}});
    }
    return out;
}

json ApiService::list_databases() const {
    json out = json::array();
    for (const std::string& id : catalog_.ids()) {
        auto model = catalog_.find(id);
        out.push_back({{"id", id},
                       {"dialect", model->dialect},
                       {"tables", model->tables.size()},
                       {"executable", model->source.kind == SchemaSourceKind::DatabaseFile}});
    }
    return out;
}

json ApiService::compare(const json& body) const {
    require_object(body);
    const std::string pred = string_field(body, "pred", true);
    const std::string gold = string_field(body, "gold", true);
    const std::string database_id = string_field(body, "database_id", false);
    std::optional<std::filesystem::path> db;
    if (!database_id.empty()) {
        if (!catalog_.find(database_id)) {
            throw ApiError(ApiErrorCode::NotFound, "unknown database '" + database_id + "'");
        }
        db = database_file(database_id);
    }
    if (trim(pred).empty() || trim(gold).empty()) {
        throw ApiError(ApiErrorCode::Validation, "pred and gold must not be empty");
    }
    return to_json(compare_sql(pred, gold, db));
}

}  // namespace ambi
