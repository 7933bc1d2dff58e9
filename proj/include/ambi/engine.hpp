#pragma once

#include "ambi/llm_gateway.hpp"
#include "ambi/preference_store.hpp"
#include "ambi/schema_catalog.hpp"
#include "ambi/types.hpp"

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace ambi {

enum class SessionState { Detecting, AwaitingAnswers, Resolved, Failed };

std::string_view session_state_label(SessionState state);

struct SessionEvent {
    std::string timestamp;
    std::string kind;
    std::string detail;
};

struct Session {
    std::string id;
    std::string original_question;
    std::shared_ptr<const SchemaModel> schema;
    std::string dialect;
    std::string rewritten_question;
    int iteration = 0;
    int max_iterations = 3;
    SessionState state = SessionState::Detecting;
    std::vector<DetectedAmbiguity> ambiguities;  // from the latest detection pass
    std::vector<ClarificationQuestion> open_questions;
    PreferenceTree preference_tree;
    std::vector<std::string> constraint_log;
    std::vector<SessionEvent> event_log;
    std::string failure_reason;

    const ClarificationQuestion* find_open_question(std::string_view id) const;
};

struct Detection {
    std::vector<DetectedAmbiguity> ambiguities;
    std::vector<std::string> dropped;  // one reason per rejected raw item
};

struct Clarification {
    std::vector<ClarificationQuestion> questions;
    std::vector<std::string> skipped;  // one reason per ambiguity without a question
};

struct EngineOptions {
    int max_iterations = 3;
    std::size_t schema_budget = kDefaultPromptBudget;
    std::size_t snippet_k = 3;
    std::size_t max_evidence_columns = 3;
    std::function<std::chrono::system_clock::time_point()> clock = [] {
        return std::chrono::system_clock::now();
    };
};

/// Answers and additional constraints supplied for one round of questions.
struct AnswerRound {
    std::vector<UserAnswer> answers;
    std::vector<std::string> constraints;
};

using AnswerProvider = std::function<AnswerRound(const std::vector<ClarificationQuestion>&)>;

/// Drives detection, clarification and refinement for one question at a time.
/// Holds no per-session state, so one engine can serve many sessions.
class Disambiguator {
public:
    explicit Disambiguator(std::shared_ptr<LlmGateway> gateway, EngineOptions options = {});

    /// Throws std::invalid_argument on an empty question and DetectionFailure
    /// when the gateway cannot produce a parseable list.
    Detection detect(std::string_view question, const SchemaModel& schema,
                     std::string_view clarification_context = {}) const;

    /// One question per ambiguity, in order, minus logged skips. Throws
    /// std::invalid_argument on empty input.
    Clarification clarify(const std::vector<DetectedAmbiguity>& ambiguities,
                          const SchemaModel& schema, std::string_view question) const;

    Session start_session(std::string id, std::string question,
                          std::shared_ptr<const SchemaModel> schema, std::string dialect) const;

    /// Runs the first detection pass: Detecting -> AwaitingAnswers, Resolved
    /// or Failed.
    void begin(Session& session) const;

    /// Records answers as preferences, refines the question, re-detects.
    /// Throws InvalidState, StaleAnswer or InvalidAnswer before touching the
    /// session. Hitting the iteration cap leaves the session Failed with
    /// failure_reason "max_iterations_exceeded".
    void apply_answers(Session& session, const std::vector<UserAnswer>& answers,
                       const std::vector<std::string>& constraints) const;

    /// begin + repeated apply_answers until Resolved or Failed.
    void resolve_loop(Session& session, const AnswerProvider& provider,
                      int max_iterations) const;

    const EngineOptions& options() const { return options_; }
    LlmGateway& gateway() const { return *gateway_; }

private:
    void log(Session& session, std::string kind, std::string detail) const;
    void detect_and_clarify(Session& session) const;
    std::vector<SchemaSnippet> evidence_for(const std::string& rationale,
                                            const SchemaModel& schema) const;

    std::shared_ptr<LlmGateway> gateway_;
    EngineOptions options_;
};

/// Preference key for an answered question: "<kind>:<phrase>" where kind is
/// column, value, keyword, knowledge or temporal.
std::string preference_target_key(const ClarificationQuestion& question);

nlohmann::json to_json(const DetectedAmbiguity& ambiguity);
nlohmann::json to_json(const ClarificationQuestion& question);
nlohmann::json to_json(const SchemaSnippet& snippet);
nlohmann::json session_summary(const Session& session);

}  // namespace ambi
