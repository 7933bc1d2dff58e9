#pragma once

#include "ambi/engine.hpp"
#include "ambi/llm_gateway.hpp"
#include "ambi/schema_catalog.hpp"
#include "ambi/taxonomy.hpp"
#include "ambi/types.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ambi {

enum class CaseSource { Bird, Tag, Custom };

std::string_view case_source_label(CaseSource source);  // "BIRD", "TAG", "custom"
CaseSource parse_case_source(std::string_view label);   // throws std::invalid_argument

struct Annotation {
    std::string phrase;
    Span span;
    AmbiguityCategory category;
    std::string gold_resolution;

    bool operator==(const Annotation&) const = default;
};

struct EvalCase {
    std::string id;
    CaseSource source = CaseSource::Custom;
    std::string database_id;
    std::string question;
    std::string gold_sql;
    std::vector<Annotation> annotations;
    std::optional<std::string> notes;

    bool operator==(const EvalCase&) const = default;
};

/// One JSON object per non-blank line. Throws ValidationError whose path
/// names the line, case id and field.
std::vector<EvalCase> parse_dataset(std::istream& in);
std::vector<EvalCase> load_dataset(const std::filesystem::path& path);
EvalCase case_from_json(const nlohmann::json& doc, const std::string& where = {});
nlohmann::json to_json(const EvalCase& eval_case);

struct Counts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    Counts& operator+=(const Counts& other);
    bool operator==(const Counts&) const = default;
};

struct DetectionScore {
    Counts total;
    std::array<Counts, kCategoryCount> per_category{};
    std::vector<std::pair<std::size_t, std::size_t>> matches;  // (detected, annotated)
};

/// One-to-one matching on equal category and overlapping spans, seeded
/// greedily by overlap length and completed with augmenting paths so the
/// number of matches is maximal.
DetectionScore score_detection(const std::vector<DetectedAmbiguity>& detected,
                               const std::vector<Annotation>& annotated);

struct MetricsRow {
    Counts counts;
    double precision = 0;  // fractions in [0, 1]
    double recall = 0;
    double f1 = 0;
    bool precision_zero_division = false;
    bool recall_zero_division = false;
    bool f1_zero_division = false;
};

MetricsRow metrics_from_counts(const Counts& counts);

/// Harmonic mean, 0 when p + r == 0. Units are whatever the inputs use.
double f1_score(double precision, double recall);

struct AccuracyRow {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy = 0;
};

struct CaseResult {
    std::string case_id;
    CaseSource source = CaseSource::Custom;
    bool excluded = false;
    bool correct = false;
    std::string question_used;
    std::string generated_sql;
    std::string final_state;
    int iterations = 0;
    std::string error;
    std::optional<DetectionScore> detection;
};

struct MetricsReport {
    std::array<MetricsRow, kCategoryCount> per_category{};
    std::array<MetricsRow, 2> per_dimension{};
    MetricsRow overall;
    bool detection_scored = false;
    std::optional<bool> with_disambiguation;
    AccuracyRow accuracy_overall;
    std::map<std::string, AccuracyRow> accuracy_per_source;
    std::vector<CaseResult> case_results;
};

/// Pools counts (micro-average) into per-category, per-dimension and
/// overall rows.
MetricsReport aggregate(const std::vector<DetectionScore>& outcomes);

nlohmann::json to_json(const MetricsReport& report);
std::string render_text(const MetricsReport& report);

/// Picks the option whose resolution shares the most distinct tokens with the
/// gold resolution of the best-overlapping annotation. Throws
/// NoConfidentAnswer when nothing overlaps or the best score is tied.
UserAnswer oracle_answer(const ClarificationQuestion& question, const EvalCase& eval_case);

struct GeneratorHook {
    enum class Kind { ExternalHttp, GatewayPrompt, Scripted };
    Kind kind = Kind::GatewayPrompt;
    std::string url;
    std::filesystem::path script_path;
    int timeout_ms = 30000;
};

class SqlGenerator {
public:
    virtual ~SqlGenerator() = default;
    /// Throws GenerationError.
    virtual std::string generate(const std::string& question, const SchemaModel& schema,
                                 const std::string& dialect) = 0;
};

/// `gateway` is used by GatewayPrompt and may be null for the other kinds.
std::unique_ptr<SqlGenerator> make_generator(const GeneratorHook& hook,
                                             std::shared_ptr<LlmGateway> gateway);

/// Body of a ```sql fence if present, else the trimmed text.
std::string extract_sql(const std::string& text);

struct RunOptions {
    bool with_disambiguation = true;
    std::string dialect = "sqlite";
    int max_iterations = 3;
    unsigned workers = 1;
};

/// Never aborts on a per-case failure; throws std::invalid_argument on an
/// empty dataset.
MetricsReport run_end_to_end(const std::vector<EvalCase>& dataset, const Disambiguator& engine,
                             SqlGenerator& generator, const SchemaCatalog& catalog,
                             const RunOptions& options);

}  // namespace ambi
