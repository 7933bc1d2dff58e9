#include "ambi/schema_catalog.hpp"

#include "ambi/errors.hpp"
#include "sqlite_util.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace ambi {

using nlohmann::json;

const ColumnInfo* TableInfo::find_column(std::string_view column) const {
    for (const ColumnInfo& c : columns) {
        if (iequals(c.name, column)) return &c;
    }
    return nullptr;
}

const TableInfo* SchemaModel::find_table(std::string_view table) const {
    for (const TableInfo& t : tables) {
        if (iequals(t.name, table)) return &t;
    }
    return nullptr;
}

namespace {

sqlite::StmtHandle prepare(sqlite3* db, const std::string& sql, const std::filesystem::path& path) {
    sqlite3_stmt* raw = nullptr;
    const int rc = sqlite3_prepare_v2(db, sql.c_str(), -1, &raw, nullptr);
    sqlite::StmtHandle stmt(raw);
    if (rc != SQLITE_OK) {
        throw FormatError(path.string() + ": " + sqlite3_errmsg(db));
    }
    return stmt;
}

void step_or_throw(sqlite3* db, int rc, const std::filesystem::path& path) {
    if (rc != SQLITE_ROW && rc != SQLITE_DONE) {
        throw FormatError(path.string() + ": " + sqlite3_errmsg(db));
    }
}

std::vector<std::string> sample_column(sqlite3* db, const std::string& table,
                                       const std::string& column, std::size_t k,
                                       const std::filesystem::path& path) {
    const std::string qc = sqlite::quote_identifier(column);
    const std::string sql = "SELECT DISTINCT CAST(" + qc + " AS TEXT) AS v FROM " +
                            sqlite::quote_identifier(table) + " WHERE " + qc +
                            " IS NOT NULL ORDER BY v LIMIT " + std::to_string(k);
    auto stmt = prepare(db, sql, path);
    std::vector<std::string> values;
    int rc;
    while ((rc = sqlite3_step(stmt.get())) == SQLITE_ROW) {
        values.push_back(sqlite::column_text(stmt.get(), 0));
    }
    step_or_throw(db, rc, path);
    return values;
}

// --- descriptor parsing ---------------------------------------------------

std::string child(const std::string& path, const char* key) {
    return path.empty() ? std::string(key) : path + "." + key;
}

const json& require(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(child(path, key), "missing required field");
    return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& path,
                           bool non_empty = true) {
    const json& v = require(obj, key, path);
    if (!v.is_string()) throw ValidationError(child(path, key), "expected a string");
    std::string s = v.get<std::string>();
    if (non_empty && trim(s).empty()) throw ValidationError(child(path, key), "must not be empty");
    return s;
}

std::optional<std::string> optional_string(const json& obj, const char* key,
                                           const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ValidationError(child(path, key), "expected a string");
    return it->get<std::string>();
}

ColumnInfo parse_column(const json& doc, const std::string& path) {
    if (!doc.is_object()) throw ValidationError(path, "expected an object");
    ColumnInfo column;
    column.name = require_string(doc, "name", path);
    column.declared_type = require_string(doc, "declared_type", path, false);
    column.description = optional_string(doc, "description", path);
    if (auto it = doc.find("sample_values"); it != doc.end() && !it->is_null()) {
        const std::string values_path = path + ".sample_values";
        if (!it->is_array()) throw ValidationError(values_path, "expected an array");
        std::set<std::string> seen;
        for (std::size_t i = 0; i < it->size(); ++i) {
            const json& v = (*it)[i];
            std::string text;
            if (v.is_string()) {
                text = v.get<std::string>();
            } else if (v.is_number() || v.is_boolean()) {
                text = v.dump();
            } else {
                throw ValidationError(values_path + "[" + std::to_string(i) + "]",
                                      "expected a string or number");
            }
            if (!seen.insert(text).second) {
                throw ValidationError(values_path + "[" + std::to_string(i) + "]",
                                      "duplicate sample value '" + text + "'");
            }
            column.sample_values.push_back(std::move(text));
        }
    }
    return column;
}

TableInfo parse_table(const json& doc, const std::string& path) {
    if (!doc.is_object()) throw ValidationError(path, "expected an object");
    TableInfo table;
    table.name = require_string(doc, "name", path);
    if (auto it = doc.find("row_count"); it != doc.end() && !it->is_null()) {
        if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
            throw ValidationError(path + ".row_count",
                                  "expected a non-negative integer");
        }
        table.row_count = it->get<std::int64_t>();
    }
    const json& columns = require(doc, "columns", path);
    if (!columns.is_array()) {
        throw ValidationError(path + ".columns", "expected an array");
    }
    std::set<std::string> names;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const std::string column_path = path + ".columns[" + std::to_string(i) + "]";
        ColumnInfo column = parse_column(columns[i], column_path);
        if (!names.insert(to_lower(column.name)).second) {
            throw ValidationError(column_path + ".name",
                                  "duplicate column name '" + column.name + "'");
        }
        table.columns.push_back(std::move(column));
    }
    return table;
}

std::string render_table(const TableInfo& table) {
    std::ostringstream out;
    out << "Table " << table.name;
    if (table.row_count) out << " (" << *table.row_count << " rows)";
    out << "\n";
    for (const ColumnInfo& column : table.columns) {
        out << "  - " << column.name;
        if (!column.declared_type.empty()) out << " " << column.declared_type;
        if (column.description && !column.description->empty()) {
            out << ": " << *column.description;
        }
        if (!column.sample_values.empty()) {
            out << " [samples: ";
            const std::size_t n = std::min<std::size_t>(3, column.sample_values.size());
            for (std::size_t i = 0; i < n; ++i) {
                if (i > 0) out << ", ";
                out << column.sample_values[i];
            }
            out << "]";
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace

SchemaModel ingest_database_file(const std::filesystem::path& path, std::size_t sample_k) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        throw IoError(path.string() + ": not a readable file");
    }
    if (!std::ifstream(path, std::ios::binary)) {
        throw IoError(path.string() + ": cannot open for reading");
    }
    std::string open_error;
    sqlite::DbHandle db = sqlite::open_readonly(path, open_error);
    if (!db) throw IoError(path.string() + ": " + open_error);

    SchemaModel model;
    model.database_id = path.stem().string();
    model.dialect = "sqlite";
    model.source = {SchemaSourceKind::DatabaseFile, path};

    std::vector<std::string> table_names;
    {
        auto stmt = prepare(db.get(),
                            "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE "
                            "'sqlite\\_%' ESCAPE '\\' ORDER BY rowid",
                            path);
        int rc;
        while ((rc = sqlite3_step(stmt.get())) == SQLITE_ROW) {
            table_names.push_back(sqlite::column_text(stmt.get(), 0));
        }
        step_or_throw(db.get(), rc, path);
    }

    for (const std::string& name : table_names) {
        TableInfo table;
        table.name = name;
        {
            auto stmt = prepare(db.get(), "PRAGMA table_info(" + sqlite::quote_identifier(name) + ")",
                                path);
            int rc;
            while ((rc = sqlite3_step(stmt.get())) == SQLITE_ROW) {
                ColumnInfo column;
                column.name = sqlite::column_text(stmt.get(), 1);
                column.declared_type = sqlite::column_text(stmt.get(), 2);
                table.columns.push_back(std::move(column));
            }
            step_or_throw(db.get(), rc, path);
        }
        for (ColumnInfo& column : table.columns) {
            column.sample_values = sample_column(db.get(), name, column.name, sample_k, path);
        }
        {
            auto stmt = prepare(db.get(), "SELECT COUNT(*) FROM " + sqlite::quote_identifier(name),
                                path);
            const int rc = sqlite3_step(stmt.get());
            step_or_throw(db.get(), rc, path);
            table.row_count = sqlite3_column_int64(stmt.get(), 0);
        }
        model.tables.push_back(std::move(table));
    }
    return model;
}

SchemaModel ingest_descriptor(const json& doc, const std::filesystem::path& origin) {
    if (!doc.is_object()) throw ValidationError("", "descriptor must be a JSON object");
    SchemaModel model;
    model.database_id = require_string(doc, "database_id", "");
    model.dialect = require_string(doc, "dialect", "");
    model.source = {SchemaSourceKind::Descriptor, origin};
    const json& tables = require(doc, "tables", "");
    if (!tables.is_array()) throw ValidationError("tables", "expected an array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < tables.size(); ++i) {
        const std::string table_path = "tables[" + std::to_string(i) + "]";
        TableInfo table = parse_table(tables[i], table_path);
        if (!names.insert(to_lower(table.name)).second) {
            throw ValidationError(table_path + ".name",
                                  "duplicate table name '" + table.name + "'");
        }
        model.tables.push_back(std::move(table));
    }
    return model;
}

SchemaModel ingest_descriptor_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open for reading");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("", path.string() + ": invalid JSON: " + e.what());
    }
    return ingest_descriptor(doc, path);
}

json to_descriptor(const SchemaModel& model) {
    json tables = json::array();
    for (const TableInfo& table : model.tables) {
        json columns = json::array();
        for (const ColumnInfo& column : table.columns) {
            json c = {{"name", column.name},
                      {"declared_type", column.declared_type},
                      {"sample_values", column.sample_values}};
            if (column.description) c["description"] = *column.description;
            columns.push_back(std::move(c));
        }
        json t = {{"name", table.name}, {"columns", std::move(columns)}};
        if (table.row_count) t["row_count"] = *table.row_count;
        tables.push_back(std::move(t));
    }
    return {{"database_id", model.database_id},
            {"dialect", model.dialect},
            {"tables", std::move(tables)}};
}

SchemaSnippet column_snippet(const SchemaModel& model, std::string_view table,
                             std::string_view column, std::size_t k) {
    const TableInfo* t = model.find_table(table);
    const ColumnInfo* c = t ? t->find_column(column) : nullptr;
    if (!c) {
        throw UnknownColumn("unknown column " + std::string(table) + "." + std::string(column) +
                            " in database '" + model.database_id + "'");
    }
    SchemaSnippet snippet{t->name, c->name, c->description, {}};
    const std::size_t n = std::min(k, c->sample_values.size());
    snippet.values.assign(c->sample_values.begin(),
                          c->sample_values.begin() + static_cast<std::ptrdiff_t>(n));
    return snippet;
}

std::string render_for_prompt(const SchemaModel& model, std::size_t budget) {
    std::string out;
    for (std::size_t i = 0; i < model.tables.size(); ++i) {
        std::string block = render_table(model.tables[i]);
        if (out.size() + block.size() > budget) {
            out += std::string(kTruncationMarker) + " " +
                   std::to_string(model.tables.size() - i) + " of " +
                   std::to_string(model.tables.size()) + " tables omitted]\n";
            break;
        }
        out += block;
    }
    return out;
}

SchemaCatalog SchemaCatalog::load_directory(const std::filesystem::path& dir, std::size_t sample_k) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw IoError(dir.string() + ": not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    SchemaCatalog catalog;
    for (const auto& file : files) {
        const std::string ext = to_lower(file.extension().string());
        if (ext == ".sqlite" || ext == ".db" || ext == ".sqlite3") {
            catalog.add(ingest_database_file(file, sample_k));
        } else if (ext == ".json") {
            catalog.add(ingest_descriptor_file(file));
        }
    }
    return catalog;
}

void SchemaCatalog::add(SchemaModel model) {
    std::string id = model.database_id;
    models_[std::move(id)] = std::make_shared<const SchemaModel>(std::move(model));
}

std::shared_ptr<const SchemaModel> SchemaCatalog::find(std::string_view database_id) const {
    auto it = models_.find(database_id);
    return it == models_.end() ? nullptr : it->second;
}

std::vector<std::string> SchemaCatalog::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, model] : models_) out.push_back(id);
    return out;
}

}  // namespace ambi
