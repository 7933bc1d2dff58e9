#include "ambi/engine.hpp"
#include "ambi/errors.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace ambi;
using namespace ambi::testing;
using nlohmann::json;

namespace {

EngineOptions fixed_clock() {
    EngineOptions options;
    options.clock = [] { return std::chrono::system_clock::time_point(std::chrono::seconds(1767225600)); };
    return options;
}

std::string question_for(const std::vector<ClarificationQuestion>& qs, AmbiguityCategory c) {
    for (const auto& q : qs) {
        if (q.category == c) return q.id;
    }
    return {};
}

std::string detect_reply(const json& items) { return items.dump(); }

}  // namespace

TEST(Detect, RunningExample) {
    Disambiguator engine(scripted_gateway());
    const Detection d = engine.detect(kRunningExample, *formula_one());
    ASSERT_EQ(d.ambiguities.size(), 2u);
    EXPECT_TRUE(d.dropped.empty());
    const DetectedAmbiguity& ranked = d.ambiguities[0];
    EXPECT_EQ(ranked.phrase, "ranked 2");
    EXPECT_EQ(ranked.category, AmbiguityCategory::UnclearSchemaReference);
    EXPECT_EQ(kRunningExample.substr(ranked.span.start, ranked.span.length()), "ranked 2");
    std::vector<std::string> evidence;
    for (const auto& s : ranked.evidence) evidence.push_back(s.table + "." + s.column);
    EXPECT_EQ(evidence, (std::vector<std::string>{"results.position", "results.rank", "driverStandings.position"}));
    EXPECT_FALSE(ranked.evidence[1].values.empty());

    const DetectedAmbiguity& war = d.ambiguities[1];
    EXPECT_EQ(war.category, AmbiguityCategory::AmbiguousTemporalSpatialScope);
    EXPECT_TRUE(war.evidence.empty()) << "LLM-related categories carry no schema evidence";
}

TEST(Detect, NoAmbiguity) {
    Disambiguator engine(scripted_gateway());
    EXPECT_TRUE(engine.detect("How many races were held in 2009?", *formula_one()).ambiguities.empty());
}

TEST(Detect, InvalidItemsAreDroppedWithReasons) {
    const std::string q = "Who is the best driver in Europe?";
    auto gateway = scripted_gateway(json::array({entry("detect", "QUESTION: ", detect_reply(json::array({
        {{"phrase", "BEST driver"}, {"category", "insufficient_reasoning_context"}, {"rationale", "no criterion"}},
        {{"phrase", "Asia"}, {"category", "ambiguous_temporal_spatial_scope"}},
        {{"phrase", "Europe"}, {"category", "geography"}},
        {{"category", "unclear_value_reference"}},
        {{"phrase", "best driver"}, {"category", "insufficient_reasoning_context"}},
        {{"phrase", "in Europe"}, {"category", "ambiguous_temporal_spatial_scope"}},
    })))}));
    Disambiguator engine(gateway);
    const Detection d = engine.detect(q, *formula_one());
    ASSERT_EQ(d.ambiguities.size(), 2u);
    EXPECT_EQ(d.ambiguities[0].phrase, "best driver") << "phrase is taken from the question text";
    EXPECT_EQ(d.ambiguities[0].span.start, 11u);
    EXPECT_EQ(d.ambiguities[1].phrase, "in Europe");
    EXPECT_EQ(d.dropped.size(), 4u);
}

TEST(Detect, Errors) {
    Disambiguator engine(scripted_gateway(json::array({entry("detect", "QUESTION: ", "I refuse.")})));
    EXPECT_THROW(engine.detect("  ", *formula_one()), std::invalid_argument);
    EXPECT_THROW(engine.detect("Anything?", *formula_one()), DetectionFailure);
}

TEST(Detect, EvidenceFromExplicitColumnsAndBareNames) {
    const std::string q = "Show the top nationality";
    auto gateway = scripted_gateway(json::array({entry("detect", "QUESTION: ", detect_reply(json::array({
        {{"phrase", "nationality"}, {"category", "unclear_schema_reference"},
         {"rationale", "nationality exists in two tables"}, {"columns", {"constructors.nationality"}}},
    })))}));
    Disambiguator engine(gateway);
    const Detection d = engine.detect(q, *formula_one());
    ASSERT_EQ(d.ambiguities.size(), 1u);
    std::vector<std::string> evidence;
    for (const auto& s : d.ambiguities[0].evidence) evidence.push_back(s.table + "." + s.column);
    EXPECT_EQ(evidence, (std::vector<std::string>{"constructors.nationality", "drivers.nationality"}));
}

TEST(Clarify, RunningExampleQuestions) {
    Disambiguator engine(scripted_gateway());
    const Detection d = engine.detect(kRunningExample, *formula_one());
    const Clarification c = engine.clarify(d.ambiguities, *formula_one(), kRunningExample);
    ASSERT_EQ(c.questions.size(), 2u);
    EXPECT_TRUE(c.skipped.empty());
    const ClarificationQuestion& ranked = c.questions[0];
    EXPECT_EQ(ranked.ambiguity_id, d.ambiguities[0].id);
    ASSERT_EQ(ranked.options.size(), 3u);
    EXPECT_EQ(ranked.options[0].key, "A");
    EXPECT_EQ(ranked.options[2].key, "C");
    ASSERT_TRUE(ranked.options[1].snippet);
    EXPECT_EQ(ranked.options[1].snippet->column, "rank");
    const ClarificationQuestion& war = c.questions[1];
    for (const auto& o : war.options) {
        EXPECT_FALSE(o.snippet);
        EXPECT_NE(o.display.find("1975"), std::string::npos) << "temporal options carry an exact time reference";
    }
}

TEST(Clarify, InvalidRepliesAreSkipped) {
    const std::string q = "Which city has the best drivers?";
    auto reply = [](json options) { return json{{"question", "Which?"}, {"options", options}}.dump(); };
    auto gateway = scripted_gateway(json::array({
        entry("clarify", "AMBIGUOUS PHRASE: one\n", reply(json::array({{{"resolution", "only"}}}))),
        entry("clarify", "AMBIGUOUS PHRASE: badcol\n",
              reply(json::array({{{"resolution", "a"}, {"column", "drivers.city"}}, {{"resolution", "b"}}}))),
        entry("clarify", "AMBIGUOUS PHRASE: mixed\n",
              reply(json::array({{{"key", "A"}, {"resolution", "a"}}, {{"resolution", "b"}}}))),
        entry("clarify", "AMBIGUOUS PHRASE: keyed\n",
              reply(json::array({{{"key", "X"}, {"resolution", "x"}}, {{"key", "Y"}, {"resolution", "y"}}}))),
        entry("clarify", "AMBIGUOUS PHRASE: knowledge\n",
              reply(json::array({{{"resolution", "a"}, {"column", "drivers.surname"}}, {{"resolution", "b"}}}))),
    }));
    auto amb = [](std::string phrase, AmbiguityCategory c) {
        DetectedAmbiguity a;
        a.id = "amb-" + phrase;
        a.phrase = phrase;
        a.category = c;
        return a;
    };
    Disambiguator engine(gateway);
    const Clarification c = engine.clarify(
        {amb("one", AmbiguityCategory::UnclearSchemaReference),
         amb("badcol", AmbiguityCategory::UnclearSchemaReference),
         amb("mixed", AmbiguityCategory::UnclearSchemaReference),
         amb("keyed", AmbiguityCategory::UnclearSchemaReference),
         amb("knowledge", AmbiguityCategory::UnclearKnowledgeSource),
         amb("unscripted", AmbiguityCategory::UnclearSchemaReference)},
        *formula_one(), q);
    ASSERT_EQ(c.questions.size(), 2u);
    EXPECT_EQ(c.questions[0].options[1].key, "Y");
    EXPECT_FALSE(c.questions[1].options[0].snippet) << "no snippets for LLM-related categories";
    EXPECT_EQ(c.skipped.size(), 4u);
    EXPECT_THROW(engine.clarify({}, *formula_one(), q), std::invalid_argument);
}

TEST(Session, RunningExampleResolvesInOneIteration) {
    Disambiguator engine(scripted_gateway(), fixed_clock());
    Session s = engine.start_session("s1", kRunningExample, formula_one(), "sqlite");
    EXPECT_EQ(s.state, SessionState::Detecting);
    engine.begin(s);
    ASSERT_EQ(s.state, SessionState::AwaitingAnswers);
    ASSERT_EQ(s.open_questions.size(), 2u);
    const std::string ranked = question_for(s.open_questions, AmbiguityCategory::UnclearSchemaReference);
    const std::string war = question_for(s.open_questions, AmbiguityCategory::AmbiguousTemporalSpatialScope);
    ASSERT_FALSE(ranked.empty());
    ASSERT_FALSE(war.empty());

    engine.apply_answers(s, {{ranked, "B"}, {war, "A"}}, {"  drivers need to be German "});
    EXPECT_EQ(s.state, SessionState::Resolved);
    EXPECT_EQ(s.iteration, 1);
    EXPECT_TRUE(s.open_questions.empty());
    EXPECT_NE(s.rewritten_question.find("rank column of the results table"), std::string::npos);
    EXPECT_NE(s.rewritten_question.find("1975-04-30"), std::string::npos);
    EXPECT_NE(s.rewritten_question.find("drivers need to be German"), std::string::npos);
    EXPECT_EQ(s.original_question, kRunningExample);
    EXPECT_EQ(s.constraint_log, (std::vector<std::string>{"drivers need to be German"}));

    const auto schema_prefs = lookup(s.preference_tree, AmbiguityCategory::UnclearSchemaReference);
    ASSERT_EQ(schema_prefs.size(), 1u);
    EXPECT_EQ(schema_prefs[0].target_key, "column:ranked 2");
    EXPECT_EQ(schema_prefs[0].source_question_id, ranked);
    EXPECT_EQ(schema_prefs[0].recorded_at, "2026-01-01T00:00:00.000Z");
    EXPECT_EQ(lookup(s.preference_tree, AmbiguityCategory::AmbiguousTemporalSpatialScope).size(), 1u);

    bool saw_resolved = false;
    for (const auto& e : s.event_log) saw_resolved |= e.kind == "state" && e.detail == "detecting -> resolved";
    EXPECT_TRUE(saw_resolved);
}

TEST(Session, WithoutConstraintUsesPlainRewrite) {
    Disambiguator engine(scripted_gateway());
    Session s = engine.start_session("s", kRunningExample, formula_one(), "sqlite");
    engine.begin(s);
    std::vector<UserAnswer> answers;
    for (const auto& q : s.open_questions) answers.push_back({q.id, "A"});
    engine.apply_answers(s, answers, {});
    EXPECT_EQ(s.state, SessionState::Resolved);
    EXPECT_EQ(s.rewritten_question.find("German"), std::string::npos);
}

TEST(Session, AnswerValidation) {
    Disambiguator engine(scripted_gateway());
    Session s = engine.start_session("s", kRunningExample, formula_one(), "sqlite");
    engine.begin(s);
    const std::string q0 = s.open_questions[0].id;
    const std::string q1 = s.open_questions[1].id;
    const Session before = s;
    EXPECT_THROW(engine.apply_answers(s, {{"q-nope", "A"}, {q1, "A"}}, {}), StaleAnswer);
    EXPECT_THROW(engine.apply_answers(s, {{q0, "Z"}, {q1, "A"}}, {}), InvalidAnswer);
    EXPECT_THROW(engine.apply_answers(s, {{q0, "A"}, {q0, "B"}, {q1, "A"}}, {}), InvalidAnswer);
    try {
        engine.apply_answers(s, {{q0, "A"}}, {});
        FAIL();
    } catch (const InvalidAnswer& e) {
        EXPECT_NE(std::string(e.what()).find(q1), std::string::npos);
    }
    EXPECT_EQ(s.state, before.state);
    EXPECT_EQ(s.iteration, before.iteration);
    EXPECT_EQ(s.event_log.size(), before.event_log.size());
    EXPECT_TRUE(s.preference_tree.empty());
}

TEST(Session, StateGuards) {
    Disambiguator engine(scripted_gateway());
    Session s = engine.start_session("s", "How many races were held in 2009?", formula_one(), "sqlite");
    EXPECT_THROW(engine.apply_answers(s, {}, {}), InvalidState);
    engine.begin(s);
    EXPECT_EQ(s.state, SessionState::Resolved);
    EXPECT_TRUE(s.open_questions.empty());
    EXPECT_THROW(engine.begin(s), InvalidState);
    EXPECT_THROW(engine.apply_answers(s, {}, {}), InvalidState);
    EXPECT_THROW(engine.start_session("x", " ", formula_one(), "sqlite"), std::invalid_argument);
}

TEST(Session, EmptyRoundKeepsQuestion) {
    Disambiguator engine(scripted_gateway());
    Session s = engine.start_session("s", "How many races were held in 2009?", formula_one(), "sqlite");
    s.state = SessionState::AwaitingAnswers;
    const auto calls = engine.gateway().calls();
    engine.apply_answers(s, {}, {"   "});
    EXPECT_EQ(s.rewritten_question, "How many races were held in 2009?");
    EXPECT_EQ(s.iteration, 1);
    EXPECT_EQ(s.state, SessionState::Resolved);
    EXPECT_TRUE(s.constraint_log.empty());
    EXPECT_EQ(engine.gateway().calls() - calls, 1u) << "only the re-detection call";
}

TEST(Session, DetectionFailureFailsSession) {
    Disambiguator engine(scripted_gateway(json::array({entry("refine", "x", "y")})));
    Session s = engine.start_session("s", "Anything?", formula_one(), "sqlite");
    engine.begin(s);
    EXPECT_EQ(s.state, SessionState::Failed);
    EXPECT_EQ(s.failure_reason.rfind("detection_failure", 0), 0u);
}

TEST(Session, RefinementFailureFailsSession) {
    auto gateway = scripted_gateway(json::array({
        entry("detect", "QUESTION: ", R"([{"phrase": "best", "category": "insufficient_reasoning_context"}])"),
        entry("clarify", "AMBIGUOUS PHRASE: best",
              R"({"question": "Best how?", "options": [{"resolution": "points"}, {"resolution": "wins"}]})"),
    }));
    Disambiguator engine(gateway);
    Session s = engine.start_session("s", "Who is the best?", formula_one(), "sqlite");
    engine.begin(s);
    ASSERT_EQ(s.state, SessionState::AwaitingAnswers);
    engine.apply_answers(s, {{s.open_questions[0].id, "A"}}, {"only 2009"});
    EXPECT_EQ(s.state, SessionState::Failed);
    EXPECT_EQ(s.failure_reason.rfind("refinement_failure", 0), 0u);
    EXPECT_EQ(s.constraint_log.size(), 1u);
}

TEST(Session, AllClarificationsFailing) {
    auto gateway = scripted_gateway(json::array({
        entry("detect", "QUESTION: ", R"([{"phrase": "best", "category": "insufficient_reasoning_context"}])"),
    }));
    Disambiguator engine(gateway);
    Session s = engine.start_session("s", "Who is the best?", formula_one(), "sqlite");
    engine.begin(s);
    EXPECT_EQ(s.state, SessionState::Failed);
    EXPECT_EQ(s.failure_reason, "clarification_failure");
}

TEST(Loop, AdversarialDetectorStopsAtCap) {
    Disambiguator engine(scripted_gateway(fixture_dir() / "test" / "adversarial_script.json"));
    Session s = engine.start_session("s", "Who is the best driver?", formula_one(), "sqlite");
    int rounds = 0;
    engine.resolve_loop(s, [&](const std::vector<ClarificationQuestion>& qs) {
        ++rounds;
        AnswerRound round;
        for (const auto& q : qs) round.answers.push_back({q.id, rounds % 2 ? "A" : "B"});
        return round;
    }, 3);
    EXPECT_EQ(s.state, SessionState::Failed);
    EXPECT_EQ(s.failure_reason, "max_iterations_exceeded");
    EXPECT_EQ(s.iteration, 3);
    EXPECT_EQ(rounds, 3);
    EXPECT_FALSE(s.ambiguities.empty()) << "partial result is retained";
    const auto& leaf = s.preference_tree.leaf(AmbiguityCategory::InsufficientReasoningContext);
    ASSERT_EQ(leaf.size(), 3u);
    EXPECT_EQ(leaf[2].version, 3);
    EXPECT_EQ(lookup(s.preference_tree, AmbiguityCategory::InsufficientReasoningContext).size(), 1u);
}

TEST(Loop, CapIsConfigurable) {
    Disambiguator engine(scripted_gateway(fixture_dir() / "test" / "adversarial_script.json"));
    for (int cap : {1, 2, 5}) {
        Session s = engine.start_session("s", "Who is the best driver?", formula_one(), "sqlite");
        engine.resolve_loop(s, [](const auto& qs) {
            AnswerRound r;
            for (const auto& q : qs) r.answers.push_back({q.id, "A"});
            return r;
        }, cap);
        EXPECT_EQ(s.iteration, cap);
        EXPECT_EQ(s.state, SessionState::Failed);
    }
    Session s = engine.start_session("s", "Who is the best driver?", formula_one(), "sqlite");
    EXPECT_THROW(engine.resolve_loop(s, [](const auto&) { return AnswerRound{}; }, 0), std::invalid_argument);
}

TEST(Keys, TargetKeyKinds) {
    ClarificationQuestion q;
    q.phrase = "Ranked  2";
    q.category = AmbiguityCategory::UnclearSchemaReference;
    EXPECT_EQ(preference_target_key(q), "column:ranked 2");
    q.category = AmbiguityCategory::UnclearValueReference;
    EXPECT_EQ(preference_target_key(q), "value:ranked 2");
    q.category = AmbiguityCategory::MissingSqlKeywords;
    EXPECT_EQ(preference_target_key(q), "keyword:ranked 2");
    q.category = AmbiguityCategory::AmbiguousTemporalSpatialScope;
    EXPECT_EQ(preference_target_key(q), "temporal:ranked 2");
    q.category = AmbiguityCategory::ConflictingKnowledge;
    EXPECT_EQ(preference_target_key(q), "knowledge:ranked 2");
}

TEST(Json, SessionSummaryShape) {
    Disambiguator engine(scripted_gateway());
    Session s = engine.start_session("s9", kRunningExample, formula_one(), "sqlite");
    engine.begin(s);
    const json doc = session_summary(s);
    EXPECT_EQ(doc["id"], "s9");
    EXPECT_EQ(doc["state"], "awaiting_answers");
    EXPECT_EQ(doc["database_id"], "formula_one");
    EXPECT_EQ(doc["open_questions"].size(), 2u);
    EXPECT_EQ(doc["open_questions"][0]["options"][1]["snippet"]["column"], "rank");
    EXPECT_EQ(doc["ambiguities"][1]["dimension"], "llm_related");
    EXPECT_TRUE(doc["failure_reason"].is_null());
    EXPECT_EQ(doc["preference_tree"].size(), kCategoryCount);
}
