#include "ambi/errors.hpp"
#include "ambi/interface.hpp"
#include "ambi/sql_eval.hpp"
#include "text_util.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef AMBI_DEFAULT_DATA_DIR
#define AMBI_DEFAULT_DATA_DIR "fixtures"
#endif

namespace ambi {

using nlohmann::json;

namespace {

struct CommonOptions {
    std::string db_dir;
    std::string script;
    std::string dialect = "sqlite";
    bool json_output = false;
};

std::filesystem::path data_dir() {
    if (const char* dir = std::getenv("AMBI_DATA_DIR"); dir && *dir) return dir;
    return AMBI_DEFAULT_DATA_DIR;
}

SchemaCatalog load_catalog(const CommonOptions& common) {
    const std::filesystem::path dir = common.db_dir.empty() ? data_dir() / "db" : std::filesystem::path(common.db_dir);
    if (!std::filesystem::is_directory(dir)) throw IoError("database directory not found: " + dir.string());
    return SchemaCatalog::load_directory(dir);
}

std::shared_ptr<LlmGateway> make_gateway(const CommonOptions& common) {
    BackendConfig config = BackendConfig::from_env(data_dir() / "llm_script.json");
    if (!common.script.empty()) config.script_path = common.script;
    return LlmGateway::from_config(config);
}

std::shared_ptr<const SchemaModel> require_schema(const SchemaCatalog& catalog, const std::string& id) {
    auto schema = catalog.find(id);
    if (!schema) {
        throw Error("unknown database '" + id + "' (known: " + join(catalog.ids(), ", ") + ")");
    }
    return schema;
}

GeneratorHook parse_hook(const std::string& spec, const std::string& url, int timeout_ms) {
    GeneratorHook hook;
    hook.timeout_ms = timeout_ms;
    if (!url.empty()) {
        hook.kind = GeneratorHook::Kind::ExternalHttp;
        hook.url = url;
    } else if (spec.empty() || spec == "gateway") {
        hook.kind = GeneratorHook::Kind::GatewayPrompt;
    } else if (spec.rfind("scripted:", 0) == 0) {
        hook.kind = GeneratorHook::Kind::Scripted;
        hook.script_path = spec.substr(9);
    } else if (spec.rfind("http", 0) == 0) {
        hook.kind = GeneratorHook::Kind::ExternalHttp;
        hook.url = spec;
    } else {
        throw CLI::ValidationError("--hook", "expected gateway, scripted:<path> or an http(s) URL");
    }
    return hook;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

void print_detection(std::ostream& out, const Detection& detection, bool as_json) {
    if (as_json) {
        json items = json::array();
        for (const auto& a : detection.ambiguities) items.push_back(to_json(a));
        out << json{{"ambiguities", items}, {"dropped", detection.dropped}}.dump(2) << "\n";
        return;
    }
    if (detection.ambiguities.empty()) out << "No ambiguities detected.\n";
    for (const auto& a : detection.ambiguities) {
        out << a.id << "  [" << a.span.start << "," << a.span.end << ")  \"" << a.phrase << "\"  "
            << category_display_name(a.category) << "\n";
        if (!a.rationale.empty()) out << "    " << a.rationale << "\n";
        for (const auto& s : a.evidence) {
            out << "    evidence " << s.table << "." << s.column << ": " << join(s.values, ", ") << "\n";
        }
    }
    for (const auto& reason : detection.dropped) out << "dropped: " << reason << "\n";
}

AnswerRound ask_terminal(const std::vector<ClarificationQuestion>& questions, std::ostream& out,
                         std::istream& in) {
    AnswerRound round;
    for (const ClarificationQuestion& q : questions) {
        out << "\n" << q.text << "  (" << category_display_name(q.category) << ": \"" << q.phrase << "\")\n";
        for (const ClarificationOption& o : q.options) {
            out << "  " << o.key << ") " << o.display << "\n";
            if (o.snippet) {
                out << "       " << o.snippet->table << "." << o.snippet->column << ": "
                    << join(o.snippet->values, ", ") << "\n";
            }
        }
        for (;;) {
            out << "Choice: " << std::flush;
            std::string line;
            if (!std::getline(in, line)) throw Error("input closed before all questions were answered");
            const std::string key = to_upper(trim(line));
            if (q.find_option(key)) {
                round.answers.push_back({q.id, key});
                break;
            }
            out << "Please enter one of the option letters.\n";
        }
    }
    out << "Additional constraint (blank to skip): " << std::flush;
    std::string line;
    if (std::getline(in, line) && !trim(line).empty()) round.constraints.emplace_back(trim(line));
    return round;
}

HttpApiServer* g_server = nullptr;

void handle_stop_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err, std::istream& in) {
    CLI::App app{"Interactive ambiguity detection and clarification for text-to-SQL", "ambi"};
    app.require_subcommand(1);
    CommonOptions common;
    app.add_option("--db-dir", common.db_dir, "Directory of .sqlite files and JSON schema descriptors");
    app.add_option("--script", common.script, "Scripted LLM responses (overrides AMBI_SCRIPT_PATH)");

    std::string question, db, dataset, hook_spec, hook_url, pred_path, gold_path, exec_db, static_dir;
    std::string host = "127.0.0.1";
    int port = 8080, max_iterations = 3, hook_timeout = 30000;
    unsigned workers = 1;
    bool with_disambiguation = false;

    auto* detect = app.add_subcommand("detect", "Detect ambiguities in a question");
    detect->add_option("question", question)->required();
    detect->add_option("--db", db, "Database id")->required();
    detect->add_flag("--json", common.json_output);

    auto* interactive = app.add_subcommand("interactive", "Clarify a question in the terminal");
    interactive->add_option("question", question)->required();
    interactive->add_option("--db", db, "Database id")->required();
    interactive->add_option("--dialect", common.dialect);
    interactive->add_option("--max-iterations", max_iterations)->check(CLI::PositiveNumber);

    auto* eval = app.add_subcommand("eval", "Evaluate a JSONL dataset");
    eval->add_option("dataset", dataset)->required();
    eval->add_flag("--with-disambiguation", with_disambiguation);
    eval->add_option("--hook", hook_spec, "gateway | scripted:<path> | <url>");
    eval->add_option("--hook-url", hook_url);
    eval->add_option("--hook-timeout-ms", hook_timeout)->check(CLI::PositiveNumber);
    eval->add_option("--workers", workers)->check(CLI::Range(1u, 64u));
    eval->add_option("--max-iterations", max_iterations)->check(CLI::PositiveNumber);
    eval->add_flag("--json", common.json_output);

    auto* compare = app.add_subcommand("compare", "Compare predicted and gold SQL files");
    compare->add_option("pred", pred_path)->required();
    compare->add_option("gold", gold_path)->required();
    compare->add_option("--exec", exec_db, "SQLite database for execution comparison");

    auto* serve = app.add_subcommand("serve", "Serve the HTTP API and the web UI");
    serve->add_option("--port", port)->check(CLI::Range(0, 65535));
    serve->add_option("--host", host);
    serve->add_option("--dataset", dataset, "Example catalog (JSONL)");
    serve->add_option("--hook", hook_spec, "gateway | scripted:<path> | <url>");
    serve->add_option("--hook-url", hook_url);
    serve->add_option("--static-dir", static_dir, "Built web UI assets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (detect->parsed()) {
            const SchemaCatalog catalog = load_catalog(common);
            Disambiguator engine(make_gateway(common));
            print_detection(out, engine.detect(question, *require_schema(catalog, db)), common.json_output);
        } else if (interactive->parsed()) {
            const SchemaCatalog catalog = load_catalog(common);
            Disambiguator engine(make_gateway(common));
            Session session = engine.start_session("cli", question, require_schema(catalog, db), common.dialect);
            engine.resolve_loop(session, [&](const auto& qs) { return ask_terminal(qs, out, in); },
                                max_iterations);
            out << "\nState: " << session_state_label(session.state) << "\n";
            if (!session.failure_reason.empty()) out << "Reason: " << session.failure_reason << "\n";
            out << "Rewritten question: " << session.rewritten_question << "\n";
            return session.state == SessionState::Resolved ? 0 : 1;
        } else if (eval->parsed()) {
            const std::vector<EvalCase> cases = load_dataset(dataset);
            const SchemaCatalog catalog = load_catalog(common);
            auto gateway = make_gateway(common);
            Disambiguator engine(gateway, EngineOptions{.max_iterations = max_iterations});
            auto generator = make_generator(parse_hook(hook_spec, hook_url, hook_timeout), gateway);
            RunOptions options;
            options.with_disambiguation = with_disambiguation;
            options.max_iterations = max_iterations;
            options.workers = workers;
            const MetricsReport report = run_end_to_end(cases, engine, *generator, catalog, options);
            if (common.json_output) {
                out << to_json(report).dump(2) << "\n";
            } else {
                out << render_text(report);
            }
        } else if (compare->parsed()) {
            std::optional<std::filesystem::path> dbpath;
            if (!exec_db.empty()) dbpath = exec_db;
            const ComparisonReport report = compare_sql(read_file(pred_path), read_file(gold_path), dbpath);
            out << to_json(report).dump(2) << "\n";
        } else if (serve->parsed()) {
            SchemaCatalog catalog = load_catalog(common);
            auto gateway = make_gateway(common);
            auto engine = std::make_shared<const Disambiguator>(gateway);
            std::shared_ptr<SqlGenerator> generator = make_generator(parse_hook(hook_spec, hook_url, hook_timeout), gateway);
            const std::filesystem::path examples_path = dataset.empty() ? data_dir() / "cases.jsonl" : std::filesystem::path(dataset);
            std::vector<EvalCase> examples;
            if (std::filesystem::exists(examples_path)) examples = load_dataset(examples_path);
            ApiService service(engine, std::move(catalog), generator, std::move(examples));
            ServerOptions options{host, port, std::nullopt};
            if (!static_dir.empty()) options.static_dir = static_dir;
            HttpApiServer server(service, options);
            g_server = &server;
            std::signal(SIGINT, handle_stop_signal);
            std::signal(SIGTERM, handle_stop_signal);
            err << "listening on http://" << host << ":" << port << "\n";
            const bool ok = server.listen();
            g_server = nullptr;
            if (!ok) throw Error("could not listen on " + host + ":" + std::to_string(port));
        }
    } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace ambi
