#include "ambi/errors.hpp"
#include "ambi/llm_gateway.hpp"
#include "ambi/prompts.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

using namespace ambi;
using namespace ambi::testing;
using nlohmann::json;

namespace {

PromptRequest request(Stage stage, std::string user) {
    PromptRequest r;
    r.stage = stage;
    r.system_text = "system";
    r.user_text = std::move(user);
    return r;
}

Completion text(std::string t) { return {std::move(t), "test", 0}; }

class LocalServer {
public:
    explicit LocalServer(httplib::Server::Handler handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

private:
    httplib::Server server_;
    int port_ = -1;
    std::thread thread_;
};

BackendConfig live_config(const std::string& url) {
    BackendConfig config;
    config.mode = BackendMode::Live;
    config.base_url = url;
    config.model_name = "test-model";
    config.api_key_ref = "AMBI_TEST_KEY";
    config.backoff_initial_ms = 1;
    config.timeout_ms = 2000;
    return config;
}

const char* kOkBody = R"({"choices": [{"message": {"role": "assistant", "content": "hello"}}]})";

}  // namespace

TEST(Stage, LabelsRoundTrip) {
    for (Stage s : {Stage::Detect, Stage::Clarify, Stage::Refine, Stage::Merge, Stage::Generate}) {
        EXPECT_EQ(parse_stage(stage_label(s)), s);
    }
    EXPECT_THROW(parse_stage("summarize"), ValidationError);
}

TEST(Script, ParseValidatesEntries) {
    EXPECT_THROW(parse_script(json::object()), ValidationError);
    try {
        parse_script(json::array({entry("detect", "a", "[]"), json{{"stage", "detect"}}}));
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.path(), "[1].match_substring");
    }
    EXPECT_THROW(parse_script(json::array({entry("detect", "a", "x"), entry("detect", "a", "y")})),
                 ValidationError);
    EXPECT_NO_THROW(parse_script(json::array({entry("detect", "a", "x"), entry("refine", "a", "y")})));
}

TEST(Script, BundledScriptLoads) { EXPECT_GT(load_script(main_script()).size(), 20u); }

TEST(ScriptedBackend, FirstMatchInFileOrderWins) {
    ScriptedBackend backend(parse_script(json::array(
        {entry("detect", "drivers", "first"), entry("detect", "QUESTION", "second"),
         entry("refine", "drivers", "refined")})));
    EXPECT_EQ(backend.complete(request(Stage::Detect, "QUESTION: drivers")).text, "first");
    EXPECT_EQ(backend.complete(request(Stage::Detect, "QUESTION: teams")).text, "second");
    EXPECT_EQ(backend.complete(request(Stage::Refine, "drivers")).text, "refined");
    EXPECT_THROW(backend.complete(request(Stage::Clarify, "drivers")), NoScriptMatch);
}

TEST(ScriptedBackend, ConsumeOnceEntriesMatchOnce) {
    ScriptedBackend backend(parse_script(json::array(
        {entry("detect", "q", "once", true), entry("detect", "", "fallback")})));
    EXPECT_EQ(backend.complete(request(Stage::Detect, "q")).text, "once");
    EXPECT_EQ(backend.complete(request(Stage::Detect, "q")).text, "fallback");
}

TEST(ScriptedBackend, SameRequestSameText) {
    auto gateway = scripted_gateway();
    const PromptRequest r = build_generation_prompt(kRunningExample, "schema", "sqlite");
    EXPECT_EQ(gateway->complete(r).text, gateway->complete(r).text);
}

TEST(StructuredOutput, DetectionListForms) {
    EXPECT_EQ(parse_structured(text("[]"), OutputKind::DetectionList), json::array());
    const json fenced = parse_structured(
        text("Here you go:\n```json\n[{\"phrase\": \"x\", \"category\": \"y\"}]\n```\nDone."),
        OutputKind::DetectionList);
    ASSERT_EQ(fenced.size(), 1u);
    EXPECT_EQ(fenced[0]["phrase"], "x");
    const json wrapped = parse_structured(text(R"(Result: {"ambiguities": [{"phrase": "a"}]})"),
                                          OutputKind::DetectionList);
    EXPECT_EQ(wrapped.size(), 1u);
    EXPECT_THROW(parse_structured(text("no json here"), OutputKind::DetectionList), ParseFailure);
    EXPECT_THROW(parse_structured(text("[1, 2]"), OutputKind::DetectionList), ParseFailure);
}

TEST(StructuredOutput, BracketsInsideStringsDoNotConfuseScanner) {
    const json v = parse_structured(text(R"(x [{"phrase": "a ] b [", "category": "c"}] y)"),
                                    OutputKind::DetectionList);
    EXPECT_EQ(v[0]["phrase"], "a ] b [");
}

TEST(StructuredOutput, Clarification) {
    const json v = parse_structured(
        text(R"({"question": "Which?", "options": [{"resolution": "a"}, {"resolution": "b"}]})"),
        OutputKind::Clarification);
    EXPECT_EQ(v["question"], "Which?");
    EXPECT_THROW(parse_structured(text(R"({"question": "Which?"})"), OutputKind::Clarification),
                 ParseFailure);
}

TEST(StructuredOutput, SingleLine) {
    EXPECT_EQ(parse_structured(text("\n  Rewritten question?  \nextra"), OutputKind::SingleLine),
              "Rewritten question?");
    EXPECT_EQ(parse_structured(text("```\nInside fence\n```"), OutputKind::SingleLine), "Inside fence");
    EXPECT_EQ(parse_structured(text("\"quoted\""), OutputKind::SingleLine), "quoted");
    EXPECT_THROW(parse_structured(text("   \n  "), OutputKind::SingleLine), ParseFailure);
}

TEST(Gateway, RepairRetryOnce) {
    auto gateway = scripted_gateway(json::array(
        {entry("detect", "REPAIR:", "[]"), entry("detect", "QUESTION: q", "not json")}));
    EXPECT_EQ(gateway->complete_structured(request(Stage::Detect, "QUESTION: q"), OutputKind::DetectionList),
              json::array());
    EXPECT_EQ(gateway->calls(), 2u);
}

TEST(Gateway, RepairFailurePropagates) {
    auto gateway = scripted_gateway(json::array({entry("detect", "QUESTION: q", "still not json")}));
    EXPECT_THROW(gateway->complete_structured(request(Stage::Detect, "QUESTION: q"), OutputKind::DetectionList),
                 ParseFailure);
    EXPECT_EQ(gateway->calls(), 2u);
}

TEST(Gateway, ScriptedModeMakesNoNetworkCalls) {
    const auto before = network_call_count();
    auto gateway = scripted_gateway();
    gateway->complete(build_generation_prompt(kRunningExample, "schema", "sqlite"));
    EXPECT_EQ(network_call_count(), before);
}

TEST(BackendConfig, Validation) {
    BackendConfig config;
    config.mode = BackendMode::Scripted;
    EXPECT_THROW(config.validate(), ValidationError);
    config.script_path = "x.json";
    EXPECT_NO_THROW(config.validate());
    BackendConfig live = live_config("http://localhost:1");
    EXPECT_NO_THROW(live.validate());
    live.model_name.reset();
    EXPECT_THROW(live.validate(), ValidationError);
}

TEST(BackendConfig, FromEnvironment) {
    ::unsetenv("AMBI_LLM_MODE");
    ::unsetenv("AMBI_SCRIPT_PATH");
    BackendConfig config = BackendConfig::from_env("default.json");
    EXPECT_EQ(config.mode, BackendMode::Scripted);
    EXPECT_EQ(config.script_path, std::filesystem::path("default.json"));
    ::setenv("AMBI_LLM_MODE", "live", 1);
    ::setenv("AMBI_LLM_BASE_URL", "http://example.invalid/v1", 1);
    ::setenv("AMBI_LLM_MODEL", "m", 1);
    ::setenv("AMBI_LLM_API_KEY", "secret", 1);
    config = BackendConfig::from_env();
    EXPECT_EQ(config.mode, BackendMode::Live);
    EXPECT_EQ(config.api_key_ref, "AMBI_LLM_API_KEY");
    EXPECT_NO_THROW(config.validate());
    ::setenv("AMBI_LLM_MODE", "psychic", 1);
    EXPECT_THROW(BackendConfig::from_env(), ValidationError);
    for (const char* name : {"AMBI_LLM_MODE", "AMBI_LLM_BASE_URL", "AMBI_LLM_MODEL", "AMBI_LLM_API_KEY"}) {
        ::unsetenv(name);
    }
    ::setenv("AMBI_LLM_MODE", "scripted", 1);
}

TEST(HttpChatBackend, RetriesServerErrorsThenSucceeds) {
    std::atomic<int> hits{0};
    std::string auth;
    json seen;
    LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
        if (++hits <= 2) {
            res.status = 500;
            return;
        }
        auth = req.get_header_value("Authorization");
        seen = json::parse(req.body);
        res.set_content(kOkBody, "application/json");
    });
    ::setenv("AMBI_TEST_KEY", "k-123", 1);
    const auto before = network_call_count();
    HttpChatBackend backend(live_config(server.url()));
    const Completion c = backend.complete(request(Stage::Refine, "QUESTION: q"));
    EXPECT_EQ(c.text, "hello");
    EXPECT_EQ(hits.load(), 3);
    EXPECT_EQ(network_call_count() - before, 3u);
    EXPECT_EQ(auth, "Bearer k-123");
    EXPECT_EQ(seen["model"], "test-model");
    EXPECT_EQ(seen["temperature"], 0.0);
    EXPECT_EQ(seen["messages"][1]["content"], "QUESTION: q");
}

TEST(HttpChatBackend, GivesUpAfterMaxRetries) {
    std::atomic<int> hits{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 503;
    });
    HttpChatBackend backend(live_config(server.url()));
    EXPECT_THROW(backend.complete(request(Stage::Detect, "q")), BackendUnavailable);
    EXPECT_EQ(hits.load(), 3);
}

TEST(HttpChatBackend, ClientErrorsAreNotRetried) {
    std::atomic<int> hits{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
    });
    HttpChatBackend backend(live_config(server.url()));
    EXPECT_THROW(backend.complete(request(Stage::Detect, "q")), BackendUnavailable);
    EXPECT_EQ(hits.load(), 1);
}

TEST(HttpChatBackend, MalformedReplyIsBackendUnavailable) {
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices": []})", "application/json");
    });
    HttpChatBackend backend(live_config(server.url()));
    EXPECT_THROW(backend.complete(request(Stage::Detect, "q")), BackendUnavailable);
}

TEST(HttpChatBackend, UnreachableHostExhaustsRetries) {
    BackendConfig config = live_config("http://127.0.0.1:1/v1");
    config.max_retries = 1;
    const auto before = network_call_count();
    HttpChatBackend backend(config);
    EXPECT_THROW(backend.complete(request(Stage::Detect, "q")), BackendUnavailable);
    EXPECT_EQ(network_call_count() - before, 2u);
}

TEST(TokenBucket, ZeroRateNeverBlocks) {
    TokenBucket bucket(0);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 1000; ++i) bucket.acquire();
    EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::milliseconds(100));
}

TEST(TokenBucket, LimitsRate) {
    TokenBucket bucket(50, 1);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 6; ++i) bucket.acquire();
    EXPECT_GE(std::chrono::steady_clock::now() - start, std::chrono::milliseconds(80));
}
