#include "ambi/engine.hpp"

#include "ambi/errors.hpp"
#include "ambi/prompts.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace ambi {

using nlohmann::json;

std::string_view session_state_label(SessionState state) {
    switch (state) {
        case SessionState::Detecting: return "detecting";
        case SessionState::AwaitingAnswers: return "awaiting_answers";
        case SessionState::Resolved: return "resolved";
        case SessionState::Failed: return "failed";
    }
    return "?";
}

const ClarificationQuestion* Session::find_open_question(std::string_view question_id) const {
    for (const auto& q : open_questions) {
        if (q.id == question_id) return &q;
    }
    return nullptr;
}

std::string preference_target_key(const ClarificationQuestion& question) {
    std::string_view kind;
    switch (question.category) {
        case AmbiguityCategory::UnclearSchemaReference: kind = "column"; break;
        case AmbiguityCategory::UnclearValueReference: kind = "value"; break;
        case AmbiguityCategory::MissingSqlKeywords: kind = "keyword"; break;
        case AmbiguityCategory::AmbiguousTemporalSpatialScope: kind = "temporal"; break;
        default: kind = "knowledge"; break;
    }
    return normalize_target_key(std::string(kind) + ":" + question.phrase);
}

namespace {

std::string string_field(const json& item, std::initializer_list<const char*> keys) {
    for (const char* key : keys) {
        auto it = item.find(key);
        if (it != item.end() && it->is_string()) return it->get<std::string>();
    }
    return {};
}

bool boundary_before(std::string_view text, std::size_t pos) {
    return pos == 0 || (!is_word_char(text[pos - 1]) && text[pos - 1] != '.');
}

bool boundary_after(std::string_view text, std::size_t end) {
    return end >= text.size() || (!is_word_char(text[end]) && text[end] != '.') ||
           (text[end] == '.' && (end + 1 >= text.size() || !is_word_char(text[end + 1])));
}

// Every whole-word occurrence of `needle` in `text`.
std::vector<std::size_t> mentions(std::string_view text, std::string_view needle) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while ((pos = ifind(text, needle, pos)) != std::string_view::npos) {
        if (boundary_before(text, pos) && boundary_after(text, pos + needle.size())) {
            out.push_back(pos);
        }
        pos += 1;
    }
    return out;
}

struct ColumnRef {
    std::string table;
    std::string column;
};

std::optional<ColumnRef> resolve_column_ref(std::string_view ref, const SchemaModel& schema,
                                            const std::vector<SchemaSnippet>& evidence) {
    ref = trim(ref);
    if (auto dot = ref.find('.'); dot != std::string_view::npos) {
        const TableInfo* table = schema.find_table(ref.substr(0, dot));
        const ColumnInfo* column = table ? table->find_column(ref.substr(dot + 1)) : nullptr;
        if (column) return ColumnRef{table->name, column->name};
        return std::nullopt;
    }
    for (const SchemaSnippet& snippet : evidence) {
        if (iequals(snippet.column, ref)) return ColumnRef{snippet.table, snippet.column};
    }
    for (const TableInfo& table : schema.tables) {
        if (const ColumnInfo* column = table.find_column(ref)) {
            return ColumnRef{table.name, column->name};
        }
    }
    return std::nullopt;
}

ClarificationQuestion validate_clarification(const json& doc, const DetectedAmbiguity& ambiguity,
                                             const SchemaModel& schema, std::size_t snippet_k) {
    ClarificationQuestion question;
    question.ambiguity_id = ambiguity.id;
    question.category = ambiguity.category;
    question.phrase = ambiguity.phrase;
    question.span = ambiguity.span;
    question.text = std::string(trim(doc.at("question").get<std::string>()));
    if (question.text.empty()) throw ClarificationFailure("empty question text");

    const json& options = doc.at("options");
    if (options.size() < 2 || options.size() > 6) {
        throw ClarificationFailure("expected 2-6 options, got " + std::to_string(options.size()));
    }
    std::size_t keyed = 0;
    for (const json& option : options) {
        if (!string_field(option, {"key"}).empty()) ++keyed;
    }
    if (keyed != 0 && keyed != options.size()) {
        throw ClarificationFailure("option keys given for some options only");
    }
    std::set<std::string> keys;
    for (std::size_t i = 0; i < options.size(); ++i) {
        const json& item = options[i];
        ClarificationOption option;
        option.key = keyed ? std::string(trim(string_field(item, {"key"})))
                           : std::string(1, static_cast<char>('A' + i));
        if (option.key.size() != 1 || option.key[0] < 'A' || option.key[0] > 'Z') {
            throw ClarificationFailure("option key '" + option.key + "' is not a single letter");
        }
        if (!keys.insert(option.key).second) {
            throw ClarificationFailure("duplicate option key '" + option.key + "'");
        }
        option.resolution = std::string(trim(string_field(item, {"resolution"})));
        if (option.resolution.empty()) {
            throw ClarificationFailure("option " + option.key + " has no resolution");
        }
        option.display = std::string(trim(string_field(item, {"display", "text", "label"})));
        if (option.display.empty()) option.display = option.resolution;
        const std::string column = string_field(item, {"column"});
        if (!column.empty() && is_db_related(ambiguity.category)) {
            auto ref = resolve_column_ref(column, schema, ambiguity.evidence);
            if (!ref) {
                throw ClarificationFailure("option " + option.key + " names unknown column '" +
                                           column + "'");
            }
            option.snippet = column_snippet(schema, ref->table, ref->column, snippet_k);
        }
        question.options.push_back(std::move(option));
    }
    return question;
}

}  // namespace

Disambiguator::Disambiguator(std::shared_ptr<LlmGateway> gateway, EngineOptions options)
    : gateway_(std::move(gateway)), options_(std::move(options)) {
    if (!gateway_) throw std::invalid_argument("Disambiguator needs a gateway");
}

std::vector<SchemaSnippet> Disambiguator::evidence_for(const std::string& rationale,
                                                       const SchemaModel& schema) const {
    struct Mention {
        std::size_t pos;
        std::size_t order;
        const TableInfo* table;
        const ColumnInfo* column;
    };
    std::vector<Mention> found;
    std::size_t order = 0;
    for (const TableInfo& table : schema.tables) {
        for (const ColumnInfo& column : table.columns) {
            for (std::size_t pos : mentions(rationale, table.name + "." + column.name)) {
                found.push_back({pos, order, &table, &column});
            }
            for (std::size_t pos : mentions(rationale, column.name)) {
                found.push_back({pos, order, &table, &column});
            }
            ++order;
        }
    }
    std::stable_sort(found.begin(), found.end(), [](const Mention& a, const Mention& b) {
        return a.pos != b.pos ? a.pos < b.pos : a.order < b.order;
    });
    std::vector<SchemaSnippet> out;
    std::set<std::size_t> taken;
    for (const Mention& m : found) {
        if (out.size() >= options_.max_evidence_columns) break;
        if (!taken.insert(m.order).second) continue;
        out.push_back(column_snippet(schema, m.table->name, m.column->name, options_.snippet_k));
    }
    return out;
}

Detection Disambiguator::detect(std::string_view question, const SchemaModel& schema,
                                std::string_view clarification_context) const {
    if (trim(question).empty()) throw std::invalid_argument("detect needs a non-empty question");
    const PromptRequest request = build_detection_prompt(
        question, render_for_prompt(schema, options_.schema_budget), clarification_context);
    json items;
    try {
        items = gateway_->complete_structured(request, OutputKind::DetectionList);
    } catch (const Error& e) {
        throw DetectionFailure(e.what());
    }

    Detection detection;
    std::set<std::tuple<std::size_t, std::size_t, AmbiguityCategory>> seen;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const json& item = items[i];
        const std::string where = "item " + std::to_string(i) + ": ";
        const std::string phrase(trim(string_field(item, {"phrase"})));
        if (phrase.empty()) {
            detection.dropped.push_back(where + "missing phrase");
            continue;
        }
        AmbiguityCategory category;
        try {
            category = parse_category(string_field(item, {"category", "category_label"}));
        } catch (const UnknownCategory& e) {
            detection.dropped.push_back(where + e.what());
            continue;
        }
        const std::size_t pos = ifind(question, phrase);
        if (pos == std::string_view::npos) {
            detection.dropped.push_back(where + "phrase '" + phrase + "' is not in the question");
            continue;
        }
        const Span span{pos, pos + phrase.size()};
        if (!seen.emplace(span.start, span.end, category).second) {
            detection.dropped.push_back(where + "duplicate of an earlier item");
            continue;
        }
        DetectedAmbiguity ambiguity;
        ambiguity.id = "amb-" + std::to_string(detection.ambiguities.size() + 1);
        ambiguity.phrase = std::string(question.substr(span.start, span.length()));
        ambiguity.span = span;
        ambiguity.category = category;
        ambiguity.rationale = string_field(item, {"rationale"});
        if (is_db_related(category)) {
            std::string hints = ambiguity.rationale;
            if (auto cols = item.find("columns"); cols != item.end() && cols->is_array()) {
                // Explicit column hints are scanned ahead of the rationale.
                std::string listed;
                for (const json& c : *cols) {
                    if (c.is_string()) listed += c.get<std::string>() + " ";
                }
                hints = listed + "| " + hints;
            }
            ambiguity.evidence = evidence_for(hints, schema);
        }
        detection.ambiguities.push_back(std::move(ambiguity));
    }
    return detection;
}

Clarification Disambiguator::clarify(const std::vector<DetectedAmbiguity>& ambiguities,
                                     const SchemaModel& schema, std::string_view question) const {
    if (ambiguities.empty()) throw std::invalid_argument("clarify needs at least one ambiguity");
    Clarification result;
    for (const DetectedAmbiguity& ambiguity : ambiguities) {
        const PromptRequest request = build_clarification_prompt(ambiguity, ambiguity.evidence, question);
        try {
            const json doc = gateway_->complete_structured(request, OutputKind::Clarification);
            ClarificationQuestion q = validate_clarification(doc, ambiguity, schema, options_.snippet_k);
            std::string suffix = ambiguity.id;
            if (suffix.rfind("amb-", 0) == 0) suffix.erase(0, 4);
            q.id = "q-" + suffix;
            result.questions.push_back(std::move(q));
        } catch (const Error& e) {
            result.skipped.push_back(ambiguity.id + " ('" + ambiguity.phrase + "'): " + e.what());
        } catch (const json::exception& e) {
            result.skipped.push_back(ambiguity.id + " ('" + ambiguity.phrase + "'): " + e.what());
        }
    }
    return result;
}

void Disambiguator::log(Session& session, std::string kind, std::string detail) const {
    session.event_log.push_back({format_timestamp(options_.clock()), std::move(kind), std::move(detail)});
}

namespace {

void set_state(Session& session, SessionState next, std::vector<SessionEvent>& log,
               const std::string& timestamp) {
    if (session.state == next) return;
    log.push_back({timestamp, "state",
                   std::string(session_state_label(session.state)) + " -> " +
                       std::string(session_state_label(next))});
    session.state = next;
}

}  // namespace

Session Disambiguator::start_session(std::string id, std::string question,
                                     std::shared_ptr<const SchemaModel> schema,
                                     std::string dialect) const {
    if (trim(question).empty()) throw std::invalid_argument("question must not be empty");
    if (!schema) throw std::invalid_argument("session needs a schema");
    Session session;
    session.id = std::move(id);
    session.original_question = question;
    session.rewritten_question = std::move(question);
    session.schema = std::move(schema);
    session.dialect = std::move(dialect);
    session.max_iterations = options_.max_iterations;
    log(session, "created", session.original_question);
    return session;
}

void Disambiguator::detect_and_clarify(Session& session) const {
    const std::string now = format_timestamp(options_.clock());
    session.open_questions.clear();
    Detection detection;
    try {
        detection = detect(session.rewritten_question, *session.schema,
                           describe_live_preferences(session.preference_tree));
    } catch (const DetectionFailure& e) {
        session.failure_reason = std::string("detection_failure: ") + e.what();
        log(session, "failed", session.failure_reason);
        set_state(session, SessionState::Failed, session.event_log, now);
        return;
    }
    const std::string prefix = "amb-" + std::to_string(session.iteration) + "-";
    for (std::size_t i = 0; i < detection.ambiguities.size(); ++i) {
        detection.ambiguities[i].id = prefix + std::to_string(i + 1);
    }
    for (const std::string& reason : detection.dropped) log(session, "item_dropped", reason);
    session.ambiguities = std::move(detection.ambiguities);
    log(session, "detected", std::to_string(session.ambiguities.size()) + " ambiguities in: " +
                                 session.rewritten_question);

    if (session.ambiguities.empty()) {
        set_state(session, SessionState::Resolved, session.event_log, now);
        return;
    }
    if (session.iteration >= session.max_iterations) {
        session.failure_reason = "max_iterations_exceeded";
        log(session, "failed", "ambiguities remain after " + std::to_string(session.iteration) +
                                   " iterations");
        set_state(session, SessionState::Failed, session.event_log, now);
        return;
    }
    Clarification clarification =
        clarify(session.ambiguities, *session.schema, session.rewritten_question);
    for (const std::string& reason : clarification.skipped) {
        log(session, "clarification_skipped", reason);
    }
    if (clarification.questions.empty()) {
        session.failure_reason = "clarification_failure";
        log(session, "failed", "no clarification question could be generated");
        set_state(session, SessionState::Failed, session.event_log, now);
        return;
    }
    session.open_questions = std::move(clarification.questions);
    log(session, "clarified", std::to_string(session.open_questions.size()) + " questions");
    set_state(session, SessionState::AwaitingAnswers, session.event_log, now);
}

void Disambiguator::begin(Session& session) const {
    if (session.state != SessionState::Detecting) {
        throw InvalidState("session " + session.id + " is " +
                           std::string(session_state_label(session.state)) + ", not detecting");
    }
    detect_and_clarify(session);
}

void Disambiguator::apply_answers(Session& session, const std::vector<UserAnswer>& answers,
                                  const std::vector<std::string>& constraints) const {
    if (session.state != SessionState::AwaitingAnswers) {
        throw InvalidState("session " + session.id + " is " +
                           std::string(session_state_label(session.state)) +
                           ", not awaiting answers");
    }
    std::vector<AnsweredQuestion> answered;
    std::set<std::string> seen;
    for (const UserAnswer& answer : answers) {
        const ClarificationQuestion* question = session.find_open_question(answer.question_id);
        if (!question) throw StaleAnswer("no open question with id '" + answer.question_id + "'");
        if (!seen.insert(answer.question_id).second) {
            throw InvalidAnswer("question '" + answer.question_id + "' answered twice");
        }
        if (!question->find_option(answer.selected_key)) {
            throw InvalidAnswer("question '" + answer.question_id + "' has no option '" +
                                answer.selected_key + "'");
        }
        answered.emplace_back(*question, answer);
    }
    std::vector<std::string> missing;
    for (const ClarificationQuestion& q : session.open_questions) {
        if (!seen.count(q.id)) missing.push_back(q.id);
    }
    if (!missing.empty()) throw InvalidAnswer("unanswered questions: " + join(missing, ", "));

    const std::string now = format_timestamp(options_.clock());
    for (const auto& [question, answer] : answered) {
        const ClarificationOption& option = *question.find_option(answer.selected_key);
        PreferenceEntry entry;
        entry.target_key = preference_target_key(question);
        entry.resolution = option.resolution;
        entry.source_question_id = question.id;
        entry.recorded_at = now;
        session.preference_tree =
            record(std::move(session.preference_tree), question.category, entry, gateway_.get());
        log(session, "answer_applied",
            question.id + "=" + answer.selected_key + ": " + option.resolution);
    }

    std::vector<std::string> cleaned;
    for (const std::string& c : constraints) {
        std::string_view t = trim(c);
        if (t.empty()) continue;
        cleaned.emplace_back(t);
        session.constraint_log.emplace_back(t);
        log(session, "constraint_added", std::string(t));
    }

    session.open_questions.clear();
    if (!answered.empty() || !cleaned.empty()) {
        const PromptRequest request =
            build_refinement_prompt(session.rewritten_question, answered, cleaned);
        try {
            const json line = gateway_->complete_structured(request, OutputKind::SingleLine);
            session.rewritten_question = line.get<std::string>();
            log(session, "refined", session.rewritten_question);
        } catch (const Error& e) {
            ++session.iteration;
            session.failure_reason = std::string("refinement_failure: ") + e.what();
            log(session, "failed", session.failure_reason);
            set_state(session, SessionState::Failed, session.event_log, now);
            return;
        }
    }
    ++session.iteration;
    set_state(session, SessionState::Detecting, session.event_log, now);
    detect_and_clarify(session);
}

void Disambiguator::resolve_loop(Session& session, const AnswerProvider& provider,
                                 int max_iterations) const {
    if (max_iterations <= 0) throw std::invalid_argument("max_iterations must be positive");
    session.max_iterations = max_iterations;
    if (session.state == SessionState::Detecting) begin(session);
    while (session.state == SessionState::AwaitingAnswers) {
        AnswerRound round = provider(session.open_questions);
        apply_answers(session, round.answers, round.constraints);
    }
}

json to_json(const SchemaSnippet& snippet) {
    json doc = {{"table", snippet.table}, {"column", snippet.column}, {"values", snippet.values}};
    doc["description"] = snippet.description ? json(*snippet.description) : json(nullptr);
    return doc;
}

json to_json(const DetectedAmbiguity& ambiguity) {
    json evidence = json::array();
    for (const auto& s : ambiguity.evidence) evidence.push_back(to_json(s));
    return {{"id", ambiguity.id},
            {"phrase", ambiguity.phrase},
            {"span", {ambiguity.span.start, ambiguity.span.end}},
            {"category", category_label(ambiguity.category)},
            {"dimension", dimension_label(dimension_of(ambiguity.category))},
            {"rationale", ambiguity.rationale},
            {"evidence", std::move(evidence)}};
}

json to_json(const ClarificationQuestion& question) {
    json options = json::array();
    for (const ClarificationOption& option : question.options) {
        json o = {{"key", option.key}, {"display", option.display}, {"resolution", option.resolution}};
        o["snippet"] = option.snippet ? to_json(*option.snippet) : json(nullptr);
        options.push_back(std::move(o));
    }
    return {{"id", question.id},
            {"ambiguity_id", question.ambiguity_id},
            {"text", question.text},
            {"category", category_label(question.category)},
            {"phrase", question.phrase},
            {"span", {question.span.start, question.span.end}},
            {"options", std::move(options)}};
}

json session_summary(const Session& session) {
    json questions = json::array();
    for (const auto& q : session.open_questions) questions.push_back(to_json(q));
    json ambiguities = json::array();
    for (const auto& a : session.ambiguities) ambiguities.push_back(to_json(a));
    json doc = {{"id", session.id},
                {"state", session_state_label(session.state)},
                {"iteration", session.iteration},
                {"max_iterations", session.max_iterations},
                {"original_question", session.original_question},
                {"rewritten_question", session.rewritten_question},
                {"dialect", session.dialect},
                {"database_id", session.schema ? session.schema->database_id : ""},
                {"ambiguities", std::move(ambiguities)},
                {"open_questions", std::move(questions)},
                {"constraint_log", session.constraint_log},
                {"preference_tree", snapshot(session.preference_tree)}};
    doc["failure_reason"] =
        session.failure_reason.empty() ? json(nullptr) : json(session.failure_reason);
    return doc;
}

}  // namespace ambi
