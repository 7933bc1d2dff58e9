#include "ambi/eval_harness.hpp"

#include "ambi/errors.hpp"
#include "ambi/prompts.hpp"
#include "ambi/sql_eval.hpp"
#include "http_url.hpp"
#include "text_util.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace ambi {

using nlohmann::json;

std::string_view case_source_label(CaseSource source) {
    switch (source) {
        case CaseSource::Bird: return "BIRD";
        case CaseSource::Tag: return "TAG";
        case CaseSource::Custom: return "custom";
    }
    return "custom";
}

CaseSource parse_case_source(std::string_view label) {
    if (iequals(label, "BIRD")) return CaseSource::Bird;
    if (iequals(label, "TAG")) return CaseSource::Tag;
    if (iequals(label, "custom")) return CaseSource::Custom;
    throw std::invalid_argument("unknown case source '" + std::string(label) + "'");
}

// ---------------------------------------------------------------- dataset

namespace {

const std::string& require_string(const json& doc, const char* key, const std::string& path) {
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_string()) {
        throw ValidationError(path + "." + key, "expected a string");
    }
    return it->get_ref<const std::string&>();
}

Annotation annotation_from_json(const json& doc, const std::string& question,
                                const std::string& path) {
    if (!doc.is_object()) throw ValidationError(path, "expected an object");
    Annotation a;
    a.phrase = require_string(doc, "phrase", path);
    auto span = doc.find("span");
    if (span == doc.end() || !span->is_array() || span->size() != 2 ||
        !(*span)[0].is_number_unsigned() || !(*span)[1].is_number_unsigned()) {
        throw ValidationError(path + ".span", "expected [start, end]");
    }
    a.span = {(*span)[0].get<std::size_t>(), (*span)[1].get<std::size_t>()};
    if (a.span.start >= a.span.end || a.span.end > question.size()) {
        throw ValidationError(path + ".span", "span is outside the question");
    }
    if (!iequals(std::string_view(question).substr(a.span.start, a.span.length()), a.phrase)) {
        throw ValidationError(path + ".span", "span does not cover the phrase '" + a.phrase + "'");
    }
    const std::string& label = require_string(doc, "category", path);
    try {
        a.category = parse_category(label);
    } catch (const UnknownCategory& e) {
        throw ValidationError(path + ".category", e.what());
    }
    a.gold_resolution = require_string(doc, "gold_resolution", path);
    return a;
}

}  // namespace

EvalCase case_from_json(const json& doc, const std::string& where) {
    if (!doc.is_object()) throw ValidationError(where, "expected a JSON object");
    EvalCase c;
    c.id = require_string(doc, "id", where);
    if (c.id.empty()) throw ValidationError(where + ".id", "must not be empty");
    const std::string path = where.empty() ? "case " + c.id : where + " (case " + c.id + ")";
    try {
        c.source = parse_case_source(require_string(doc, "source", path));
    } catch (const std::invalid_argument& e) {
        throw ValidationError(path + ".source", e.what());
    }
    c.database_id = require_string(doc, "database_id", path);
    c.question = require_string(doc, "question", path);
    if (trim(c.question).empty()) throw ValidationError(path + ".question", "must not be empty");
    c.gold_sql = require_string(doc, "gold_sql", path);
    try {
        canonicalize(c.gold_sql);
    } catch (const std::exception& e) {
        throw ValidationError(path + ".gold_sql", e.what());
    }
    if (auto it = doc.find("annotations"); it != doc.end()) {
        if (!it->is_array()) throw ValidationError(path + ".annotations", "expected a list");
        for (std::size_t i = 0; i < it->size(); ++i) {
            c.annotations.push_back(annotation_from_json(
                (*it)[i], c.question, path + ".annotations[" + std::to_string(i) + "]"));
        }
    }
    if (auto it = doc.find("notes"); it != doc.end() && !it->is_null()) {
        if (!it->is_string()) throw ValidationError(path + ".notes", "expected a string");
        c.notes = it->get<std::string>();
    }
    return c;
}

json to_json(const EvalCase& c) {
    json annotations = json::array();
    for (const Annotation& a : c.annotations) {
        annotations.push_back({{"phrase", a.phrase},
                               {"span", {a.span.start, a.span.end}},
                               {"category", category_label(a.category)},
                               {"gold_resolution", a.gold_resolution}});
    }
    json doc = {{"id", c.id},
                {"source", case_source_label(c.source)},
                {"database_id", c.database_id},
                {"question", c.question},
                {"gold_sql", c.gold_sql},
                {"annotations", std::move(annotations)}};
    if (c.notes) doc["notes"] = *c.notes;
    return doc;
}

std::vector<EvalCase> parse_dataset(std::istream& in) {
    std::vector<EvalCase> cases;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError(where, e.what());
        }
        EvalCase c = case_from_json(doc, where);
        if (!ids.insert(c.id).second) {
            throw ValidationError(where + " (case " + c.id + ").id", "duplicate case id");
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

std::vector<EvalCase> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read dataset " + path.string());
    return parse_dataset(in);
}

// ---------------------------------------------------------------- scoring

Counts& Counts::operator+=(const Counts& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    return *this;
}

namespace {

struct Edge {
    std::size_t d;
    std::size_t a;
    std::size_t overlap;
    bool same_phrase;
};

bool augment(std::size_t d, const std::vector<std::vector<std::size_t>>& adj,
             std::vector<bool>& visited, std::vector<std::optional<std::size_t>>& owner,
             std::vector<std::optional<std::size_t>>& partner) {
    for (std::size_t a : adj[d]) {
        if (visited[a]) continue;
        visited[a] = true;
        if (!owner[a] || augment(*owner[a], adj, visited, owner, partner)) {
            owner[a] = d;
            partner[d] = a;
            return true;
        }
    }
    return false;
}

}  // namespace

DetectionScore score_detection(const std::vector<DetectedAmbiguity>& detected,
                               const std::vector<Annotation>& annotated) {
    std::vector<Edge> edges;
    std::vector<std::vector<std::size_t>> adj(detected.size());
    for (std::size_t d = 0; d < detected.size(); ++d) {
        for (std::size_t a = 0; a < annotated.size(); ++a) {
            if (detected[d].category != annotated[a].category) continue;
            const std::size_t overlap = overlap_length(detected[d].span, annotated[a].span);
            if (overlap == 0) continue;
            edges.push_back({d, a, overlap, iequals(detected[d].phrase, annotated[a].phrase)});
            adj[d].push_back(a);
        }
    }
    std::stable_sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
        if (x.overlap != y.overlap) return x.overlap > y.overlap;
        return x.same_phrase && !y.same_phrase;
    });

    std::vector<std::optional<std::size_t>> partner(detected.size());
    std::vector<std::optional<std::size_t>> owner(annotated.size());
    for (const Edge& e : edges) {
        if (!partner[e.d] && !owner[e.a]) {
            partner[e.d] = e.a;
            owner[e.a] = e.d;
        }
    }
    for (std::size_t d = 0; d < detected.size(); ++d) {
        if (partner[d]) continue;
        std::vector<bool> visited(annotated.size(), false);
        augment(d, adj, visited, owner, partner);
    }

    DetectionScore score;
    for (std::size_t d = 0; d < detected.size(); ++d) {
        Counts& row = score.per_category[category_index(detected[d].category)];
        if (partner[d]) {
            ++row.tp;
            score.matches.emplace_back(d, *partner[d]);
        } else {
            ++row.fp;
        }
    }
    for (std::size_t a = 0; a < annotated.size(); ++a) {
        if (!owner[a]) ++score.per_category[category_index(annotated[a].category)].fn;
    }
    for (const Counts& row : score.per_category) score.total += row;
    return score;
}

double f1_score(double precision, double recall) {
    if (precision + recall == 0) return 0;
    return 2 * precision * recall / (precision + recall);
}

MetricsRow metrics_from_counts(const Counts& counts) {
    MetricsRow row;
    row.counts = counts;
    const std::size_t detected = counts.tp + counts.fp;
    const std::size_t annotated = counts.tp + counts.fn;
    row.precision_zero_division = detected == 0;
    row.recall_zero_division = annotated == 0;
    row.precision = detected ? static_cast<double>(counts.tp) / detected : 0;
    row.recall = annotated ? static_cast<double>(counts.tp) / annotated : 0;
    row.f1_zero_division = row.precision + row.recall == 0;
    row.f1 = f1_score(row.precision, row.recall);
    return row;
}

MetricsReport aggregate(const std::vector<DetectionScore>& outcomes) {
    std::array<Counts, kCategoryCount> categories{};
    for (const DetectionScore& score : outcomes) {
        for (std::size_t i = 0; i < kCategoryCount; ++i) categories[i] += score.per_category[i];
    }
    MetricsReport report;
    report.detection_scored = true;
    std::array<Counts, 2> dimensions{};
    Counts overall;
    for (AmbiguityCategory category : kAllCategories) {
        const std::size_t i = category_index(category);
        report.per_category[i] = metrics_from_counts(categories[i]);
        dimensions[is_db_related(category) ? 0 : 1] += categories[i];
        overall += categories[i];
    }
    report.per_dimension = {metrics_from_counts(dimensions[0]), metrics_from_counts(dimensions[1])};
    report.overall = metrics_from_counts(overall);
    return report;
}

// ---------------------------------------------------------------- report

namespace {

json row_json(const MetricsRow& row) {
    return {{"tp", row.counts.tp},
            {"fp", row.counts.fp},
            {"fn", row.counts.fn},
            {"precision", row.precision},
            {"recall", row.recall},
            {"f1", row.f1},
            {"precision_zero_division", row.precision_zero_division},
            {"recall_zero_division", row.recall_zero_division},
            {"f1_zero_division", row.f1_zero_division}};
}

json accuracy_json(const AccuracyRow& row) {
    return {{"correct", row.correct}, {"total", row.total}, {"accuracy", row.accuracy}};
}

std::string pct(double fraction, bool undefined) {
    if (undefined) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
    return buf;
}

std::string pad(std::string text, std::size_t width) {
    if (text.size() < width) text.append(width - text.size(), ' ');
    return text;
}

void print_row(std::ostringstream& out, const std::string& name, const MetricsRow& row) {
    out << pad(name, 40) << pad(pct(row.precision, row.precision_zero_division), 10)
        << pad(pct(row.recall, row.recall_zero_division), 10)
        << pad(pct(row.f1, row.f1_zero_division), 10) << row.counts.tp << "/" << row.counts.fp
        << "/" << row.counts.fn << "\n";
}

}  // namespace

json to_json(const MetricsReport& report) {
    json doc;
    doc["averaging"] = "micro";
    doc["detection_granularity"] = "phrase";
    doc["detection_scored"] = report.detection_scored;
    if (report.detection_scored) {
        json categories = json::object();
        for (AmbiguityCategory c : kAllCategories) {
            categories[std::string(category_label(c))] = row_json(report.per_category[category_index(c)]);
        }
        doc["per_category"] = std::move(categories);
        doc["per_dimension"] = {
            {std::string(dimension_label(Dimension::DbRelated)), row_json(report.per_dimension[0])},
            {std::string(dimension_label(Dimension::LlmRelated)), row_json(report.per_dimension[1])}};
        doc["overall"] = row_json(report.overall);
    }
    if (report.with_disambiguation) {
        json per_source = json::object();
        for (const auto& [source, row] : report.accuracy_per_source) per_source[source] = accuracy_json(row);
        doc["exact_match_accuracy"] = {{"with_disambiguation", *report.with_disambiguation},
                                       {"overall", accuracy_json(report.accuracy_overall)},
                                       {"per_source", std::move(per_source)}};
    }
    json cases = json::array();
    for (const CaseResult& r : report.case_results) {
        json item = {{"case_id", r.case_id},
                     {"source", case_source_label(r.source)},
                     {"excluded", r.excluded},
                     {"correct", r.correct},
                     {"question_used", r.question_used},
                     {"generated_sql", r.generated_sql},
                     {"final_state", r.final_state},
                     {"iterations", r.iterations}};
        item["error"] = r.error.empty() ? json(nullptr) : json(r.error);
        if (r.detection) {
            item["detection"] = {{"tp", r.detection->total.tp},
                                 {"fp", r.detection->total.fp},
                                 {"fn", r.detection->total.fn}};
        }
        cases.push_back(std::move(item));
    }
    doc["case_results"] = std::move(cases);
    return doc;
}

std::string render_text(const MetricsReport& report) {
    std::ostringstream out;
    if (report.with_disambiguation) {
        out << "Exact match accuracy ("
            << (*report.with_disambiguation ? "with" : "without") << " disambiguation)\n";
        out << pad("Source", 12) << pad("Accuracy", 10) << "Correct/Total\n";
        auto line = [&](const std::string& name, const AccuracyRow& row) {
            out << pad(name, 12) << pad(pct(row.accuracy, row.total == 0), 10) << row.correct << "/"
                << row.total << "\n";
        };
        for (const auto& [source, row] : report.accuracy_per_source) line(source, row);
        line("Overall", report.accuracy_overall);
        std::size_t excluded = 0;
        for (const CaseResult& r : report.case_results) excluded += r.excluded ? 1 : 0;
        if (excluded) out << "(" << excluded << " case(s) excluded, see case_results)\n";
        out << "\n";
    }
    if (report.detection_scored) {
        out << "Ambiguity detection (phrase level, micro-averaged)\n";
        out << pad("Category", 40) << pad("P", 10) << pad("R", 10) << pad("F1", 10) << "TP/FP/FN\n";
        for (Dimension d : kAllDimensions) {
            print_row(out, std::string(dimension_display_name(d)),
                      report.per_dimension[d == Dimension::DbRelated ? 0 : 1]);
            for (AmbiguityCategory c : kAllCategories) {
                if (dimension_of(c) != d) continue;
                print_row(out, "  " + std::string(category_display_name(c)),
                          report.per_category[category_index(c)]);
            }
        }
        print_row(out, "Overall", report.overall);
    }
    return out.str();
}

// ---------------------------------------------------------------- oracle

namespace {

std::set<std::string> tokens(std::string_view text) {
    std::set<std::string> out;
    std::string current;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            current.push_back(ascii_lower(c));
        } else if (!current.empty()) {
            out.insert(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.insert(std::move(current));
    return out;
}

}  // namespace

UserAnswer oracle_answer(const ClarificationQuestion& question, const EvalCase& eval_case) {
    const Annotation* best = nullptr;
    std::size_t best_overlap = 0;
    for (const Annotation& a : eval_case.annotations) {
        const std::size_t overlap = overlap_length(a.span, question.span);
        if (overlap == 0) continue;
        const bool better = overlap > best_overlap ||
                            (overlap == best_overlap && a.category == question.category &&
                             best->category != question.category);
        if (better) {
            best = &a;
            best_overlap = overlap;
        }
    }
    if (best == nullptr) {
        throw NoConfidentAnswer("question " + question.id + " ('" + question.phrase +
                                "') overlaps no annotation of case " + eval_case.id);
    }
    const std::set<std::string> gold = tokens(best->gold_resolution);
    std::size_t top = 0;
    std::size_t ties = 0;
    const ClarificationOption* choice = nullptr;
    for (const ClarificationOption& option : question.options) {
        std::size_t shared = 0;
        for (const std::string& t : tokens(option.resolution)) shared += gold.count(t);
        if (shared > top) {
            top = shared;
            ties = 1;
            choice = &option;
        } else if (shared == top && shared > 0) {
            ++ties;
        }
    }
    if (choice == nullptr) {
        throw NoConfidentAnswer("no option of " + question.id + " shares a token with the gold resolution");
    }
    if (ties > 1) {
        throw NoConfidentAnswer(std::to_string(ties) + " options of " + question.id +
                                " tie with " + std::to_string(top) + " shared tokens");
    }
    return {question.id, choice->key};
}

// ---------------------------------------------------------------- generators

std::string extract_sql(const std::string& text) {
    std::size_t fence = text.find("```");
    if (fence != std::string::npos) {
        std::size_t body = text.find('\n', fence);
        if (body != std::string::npos) {
            std::size_t close = text.find("```", body + 1);
            if (close != std::string::npos) {
                return std::string(trim(std::string_view(text).substr(body + 1, close - body - 1)));
            }
        }
    }
    return std::string(trim(text));
}

namespace {

class PromptGenerator final : public SqlGenerator {
public:
    explicit PromptGenerator(std::shared_ptr<LlmGateway> gateway) : gateway_(std::move(gateway)) {
        if (!gateway_) throw std::invalid_argument("prompt generator needs a gateway");
    }

    std::string generate(const std::string& question, const SchemaModel& schema,
                         const std::string& dialect) override {
        const PromptRequest request =
            build_generation_prompt(question, render_for_prompt(schema), dialect);
        std::string sql;
        try {
            sql = extract_sql(gateway_->complete(request).text);
        } catch (const Error& e) {
            throw GenerationError(e.what());
        }
        if (sql.empty()) throw GenerationError("generator returned no SQL");
        return sql;
    }

private:
    std::shared_ptr<LlmGateway> gateway_;
};

class HttpGenerator final : public SqlGenerator {
public:
    HttpGenerator(const std::string& url, int timeout_ms) : timeout_ms_(timeout_ms) {
        const SplitUrl split = split_url(url);
        host_ = split.scheme_host_port;
        path_ = split.path.empty() ? "/" : split.path;
    }

    std::string generate(const std::string& question, const SchemaModel& schema,
                         const std::string& dialect) override {
        const json body = {{"question", question},
                           {"database_id", schema.database_id},
                           {"dialect", dialect},
                           {"schema_descriptor", to_descriptor(schema)}};
        httplib::Client client(host_);
        const auto timeout = std::chrono::milliseconds(timeout_ms_);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        note_network_call();
        auto response = client.Post(path_, body.dump(), "application/json");
        if (!response) {
            throw GenerationError("hook " + host_ + path_ + ": " + httplib::to_string(response.error()));
        }
        if (response->status != 200) {
            throw GenerationError("hook returned HTTP " + std::to_string(response->status));
        }
        try {
            const json reply = json::parse(response->body);
            const std::string sql(trim(reply.at("sql").get<std::string>()));
            if (sql.empty()) throw GenerationError("hook returned empty sql");
            return sql;
        } catch (const json::exception& e) {
            throw GenerationError(std::string("malformed hook reply: ") + e.what());
        }
    }

private:
    std::string host_;
    std::string path_;
    int timeout_ms_;
};

}  // namespace

std::unique_ptr<SqlGenerator> make_generator(const GeneratorHook& hook,
                                             std::shared_ptr<LlmGateway> gateway) {
    if (hook.timeout_ms <= 0) throw std::invalid_argument("hook timeout must be positive");
    switch (hook.kind) {
        case GeneratorHook::Kind::ExternalHttp:
            return std::make_unique<HttpGenerator>(hook.url, hook.timeout_ms);
        case GeneratorHook::Kind::GatewayPrompt:
            return std::make_unique<PromptGenerator>(std::move(gateway));
        case GeneratorHook::Kind::Scripted: {
            auto backend = std::make_shared<ScriptedBackend>(load_script(hook.script_path),
                                                             "scripted-generator");
            return std::make_unique<PromptGenerator>(std::make_shared<LlmGateway>(backend));
        }
    }
    throw std::invalid_argument("unknown hook kind");
}

// ---------------------------------------------------------------- end to end

namespace {

CaseResult run_case(const EvalCase& c, const Disambiguator& engine, SqlGenerator& generator,
                    const SchemaCatalog& catalog, const RunOptions& options) {
    CaseResult result;
    result.case_id = c.id;
    result.source = c.source;
    result.question_used = c.question;
    auto schema = catalog.find(c.database_id);
    if (!schema) {
        result.error = "unknown database '" + c.database_id + "'";
        return result;
    }
    if (options.with_disambiguation) {
        Session session = engine.start_session(c.id, c.question, schema, options.dialect);
        session.max_iterations = options.max_iterations;
        try {
            engine.begin(session);
            result.detection = score_detection(session.ambiguities, c.annotations);
            engine.resolve_loop(session, [&](const std::vector<ClarificationQuestion>& questions) {
                AnswerRound round;
                for (const ClarificationQuestion& q : questions) round.answers.push_back(oracle_answer(q, c));
                return round;
            }, options.max_iterations);
        } catch (const NoConfidentAnswer& e) {
            result.excluded = true;
            result.error = std::string("excluded: ") + e.what();
            result.final_state = std::string(session_state_label(session.state));
            result.iterations = session.iteration;
            return result;
        } catch (const Error& e) {
            result.error = e.what();
        }
        result.final_state = std::string(session_state_label(session.state));
        result.iterations = session.iteration;
        if (!session.failure_reason.empty() && result.error.empty()) result.error = session.failure_reason;
        result.question_used = session.rewritten_question;
    }
    try {
        result.generated_sql = generator.generate(result.question_used, *schema, options.dialect);
    } catch (const std::exception& e) {
        result.error = std::string("generation failed: ") + e.what();
        return result;
    }
    try {
        result.correct = exact_match(result.generated_sql, c.gold_sql).exact;
    } catch (const std::exception& e) {
        result.error = std::string("comparison failed: ") + e.what();
    }
    return result;
}

}  // namespace

MetricsReport run_end_to_end(const std::vector<EvalCase>& dataset, const Disambiguator& engine,
                             SqlGenerator& generator, const SchemaCatalog& catalog,
                             const RunOptions& options) {
    if (dataset.empty()) throw std::invalid_argument("dataset is empty");
    std::vector<CaseResult> results(dataset.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < dataset.size(); i = next++) {
            results[i] = run_case(dataset[i], engine, generator, catalog, options);
        }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(options.workers, dataset.size()));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    std::vector<DetectionScore> scores;
    for (const CaseResult& r : results) {
        if (r.detection) scores.push_back(*r.detection);
    }
    MetricsReport report = options.with_disambiguation ? aggregate(scores) : MetricsReport{};
    report.with_disambiguation = options.with_disambiguation;
    for (const CaseResult& r : results) {
        if (r.excluded) continue;
        AccuracyRow& row = report.accuracy_per_source[std::string(case_source_label(r.source))];
        ++row.total;
        ++report.accuracy_overall.total;
        if (r.correct) {
            ++row.correct;
            ++report.accuracy_overall.correct;
        }
    }
    auto finish = [](AccuracyRow& row) {
        row.accuracy = row.total ? static_cast<double>(row.correct) / row.total : 0;
    };
    for (auto& [source, row] : report.accuracy_per_source) finish(row);
    finish(report.accuracy_overall);
    report.case_results = std::move(results);
    return report;
}

}  // namespace ambi
