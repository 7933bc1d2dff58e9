#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ambi {

struct ColumnInfo {
    std::string name;
    std::string declared_type;
    std::optional<std::string> description;
    std::vector<std::string> sample_values;

    bool operator==(const ColumnInfo&) const = default;
};

struct TableInfo {
    std::string name;
    std::vector<ColumnInfo> columns;
    std::optional<std::int64_t> row_count;

    const ColumnInfo* find_column(std::string_view column) const;
    bool operator==(const TableInfo&) const = default;
};

enum class SchemaSourceKind { DatabaseFile, Descriptor };

struct SchemaSource {
    SchemaSourceKind kind = SchemaSourceKind::Descriptor;
    std::filesystem::path path;

    bool operator==(const SchemaSource&) const = default;
};

struct SchemaModel {
    std::string database_id;
    std::string dialect;
    std::vector<TableInfo> tables;
    SchemaSource source;

    const TableInfo* find_table(std::string_view table) const;
    bool operator==(const SchemaModel&) const = default;
};

/// Sample values of one column, offered as evidence next to a clarification.
struct SchemaSnippet {
    std::string table;
    std::string column;
    std::optional<std::string> description;
    std::vector<std::string> values;

    bool operator==(const SchemaSnippet&) const = default;
};

inline constexpr std::size_t kDefaultSampleK = 5;
inline constexpr std::size_t kDefaultPromptBudget = 6000;
inline constexpr std::string_view kTruncationMarker = "[... schema truncated:";

/// Reads a SQLite-format database file. Per column, up to `sample_k` distinct
/// non-null values in ascending order of their text rendering.
/// Throws IoError (missing/unreadable) or FormatError (not a database).
SchemaModel ingest_database_file(const std::filesystem::path& path, std::size_t sample_k);

/// Builds a model from a JSON descriptor document. Throws ValidationError
/// whose path names the offending field.
SchemaModel ingest_descriptor(const nlohmann::json& doc,
                              const std::filesystem::path& origin = {});
SchemaModel ingest_descriptor_file(const std::filesystem::path& path);

/// Inverse of ingest_descriptor (used for the external generator protocol).
nlohmann::json to_descriptor(const SchemaModel& model);

/// Throws UnknownColumn when the table or column is absent.
SchemaSnippet column_snippet(const SchemaModel& model, std::string_view table,
                             std::string_view column, std::size_t k);

/// Deterministic text rendering for prompts, cut on table boundaries once
/// `budget` characters would be exceeded.
std::string render_for_prompt(const SchemaModel& model, std::size_t budget = kDefaultPromptBudget);

/// The databases a service or batch run can see, keyed by database_id.
class SchemaCatalog {
public:
    SchemaCatalog() = default;

    /// Loads every *.sqlite / *.db file and every *.json descriptor in `dir`.
    static SchemaCatalog load_directory(const std::filesystem::path& dir,
                                        std::size_t sample_k = kDefaultSampleK);

    void add(SchemaModel model);
    std::shared_ptr<const SchemaModel> find(std::string_view database_id) const;
    std::vector<std::string> ids() const;
    bool empty() const { return models_.empty(); }

private:
    std::map<std::string, std::shared_ptr<const SchemaModel>, std::less<>> models_;
};

}  // namespace ambi
