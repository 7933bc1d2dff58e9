#include "ambi/errors.hpp"
#include "ambi/schema_catalog.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

using namespace ambi;
using namespace ambi::testing;
using nlohmann::json;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("ambi_catalog_" + name);
}

json small_descriptor() {
    return json::parse(R"({
      "database_id": "shop", "dialect": "sqlite",
      "tables": [
        {"name": "users", "row_count": 3, "columns": [
          {"name": "id", "declared_type": "INTEGER"},
          {"name": "city", "declared_type": "TEXT", "description": "Home city",
           "sample_values": ["Austin", "Boston", "Chicago", "Denver"]}]},
        {"name": "orders", "columns": [{"name": "total", "declared_type": "REAL", "sample_values": [1.5, 20]}]}
      ]})");
}

}  // namespace

TEST(IngestDatabase, ReadsTablesInCreationOrder) {
    const SchemaModel model = ingest_database_file(formula_one_db(), 5);
    EXPECT_EQ(model.database_id, "formula_one");
    EXPECT_EQ(model.dialect, "sqlite");
    EXPECT_EQ(model.source.kind, SchemaSourceKind::DatabaseFile);
    std::vector<std::string> names;
    for (const auto& t : model.tables) names.push_back(t.name);
    EXPECT_EQ(names, (std::vector<std::string>{"drivers", "races", "results", "driverStandings",
                                               "constructors", "constructorStandings"}));
    const TableInfo* drivers = model.find_table("DRIVERS");
    ASSERT_NE(drivers, nullptr);
    EXPECT_EQ(drivers->row_count, 14);
    ASSERT_EQ(drivers->columns.size(), 5u);
    EXPECT_EQ(drivers->columns[3].name, "dob");
    EXPECT_EQ(drivers->columns[0].declared_type, "INTEGER");
}

TEST(IngestDatabase, SamplesAreDistinctSortedAndCapped) {
    const SchemaModel model = ingest_database_file(formula_one_db(), 3);
    const ColumnInfo* nationality = model.find_table("drivers")->find_column("nationality");
    ASSERT_NE(nationality, nullptr);
    EXPECT_EQ(nationality->sample_values, (std::vector<std::string>{"Brazilian", "British", "Finnish"}));
    // rank has NULLs in the data; they never appear as samples
    const ColumnInfo* rank = model.find_table("results")->find_column("rank");
    for (const auto& v : rank->sample_values) EXPECT_FALSE(v.empty());
    EXPECT_LE(rank->sample_values.size(), 3u);
}

TEST(IngestDatabase, IsDeterministic) {
    EXPECT_EQ(ingest_database_file(formula_one_db(), 5), ingest_database_file(formula_one_db(), 5));
}

TEST(IngestDatabase, MissingFileIsIoError) {
    EXPECT_THROW(ingest_database_file(temp_path("absent.sqlite"), 5), IoError);
}

TEST(IngestDatabase, NonDatabaseIsFormatError) {
    const auto path = temp_path("garbage.sqlite");
    std::ofstream(path) << "this is not a database file, just some text padding it out";
    EXPECT_THROW(ingest_database_file(path, 5), FormatError);
    std::filesystem::remove(path);
}

TEST(IngestDescriptor, ParsesAndRoundTrips) {
    const SchemaModel model = ingest_descriptor(small_descriptor());
    EXPECT_EQ(model.database_id, "shop");
    ASSERT_EQ(model.tables.size(), 2u);
    EXPECT_EQ(model.tables[0].row_count, 3);
    EXPECT_EQ(model.tables[1].columns[0].sample_values, (std::vector<std::string>{"1.5", "20"}));
    EXPECT_EQ(ingest_descriptor(to_descriptor(model)), model);
}

TEST(IngestDescriptor, BundledCaliforniaSchools) {
    const SchemaModel model = ingest_descriptor_file(db_dir() / "california_schools.json");
    EXPECT_EQ(model.database_id, "california_schools");
    EXPECT_EQ(model.source.kind, SchemaSourceKind::Descriptor);
    EXPECT_NE(model.find_table("schools")->find_column("county"), nullptr);
}

TEST(IngestDescriptor, ErrorsCarryFieldPaths) {
    auto expect_path = [](json doc, const std::string& path) {
        try {
            ingest_descriptor(doc);
            ADD_FAILURE() << "expected ValidationError at " << path;
        } catch (const ValidationError& e) {
            EXPECT_EQ(e.path(), path) << e.what();
        }
    };
    json doc = small_descriptor();
    doc["tables"][1]["columns"][0].erase("name");
    expect_path(doc, "tables[1].columns[0].name");

    doc = small_descriptor();
    doc["tables"][0]["columns"][1]["name"] = "ID";
    expect_path(doc, "tables[0].columns[1].name");

    doc = small_descriptor();
    doc["tables"][1]["name"] = "Users";
    expect_path(doc, "tables[1].name");

    doc = small_descriptor();
    doc.erase("database_id");
    expect_path(doc, "database_id");

    doc = small_descriptor();
    doc["tables"][0]["columns"][1]["sample_values"] = json::array({"a", "a"});
    expect_path(doc, "tables[0].columns[1].sample_values[1]");
}

TEST(ColumnSnippet, ReturnsFirstKSamples) {
    const SchemaModel model = ingest_descriptor(small_descriptor());
    const SchemaSnippet snippet = column_snippet(model, "users", "CITY", 2);
    EXPECT_EQ(snippet.table, "users");
    EXPECT_EQ(snippet.column, "city");
    EXPECT_EQ(snippet.values, (std::vector<std::string>{"Austin", "Boston"}));
    EXPECT_EQ(snippet.description, "Home city");
    EXPECT_EQ(column_snippet(model, "users", "city", 10).values.size(), 4u);
    EXPECT_TRUE(column_snippet(model, "users", "id", 3).values.empty());
}

TEST(ColumnSnippet, UnknownColumnThrows) {
    const SchemaModel model = ingest_descriptor(small_descriptor());
    EXPECT_THROW(column_snippet(model, "users", "email", 3), UnknownColumn);
    EXPECT_THROW(column_snippet(model, "payments", "id", 3), UnknownColumn);
}

TEST(RenderForPrompt, ListsEveryTableWithinBudget) {
    const SchemaModel model = ingest_database_file(formula_one_db(), 3);
    const std::string text = render_for_prompt(model);
    for (const auto& t : model.tables) EXPECT_NE(text.find("Table " + t.name), std::string::npos);
    EXPECT_EQ(text.find(kTruncationMarker), std::string::npos);
    EXPECT_LE(text.size(), kDefaultPromptBudget);
}

TEST(RenderForPrompt, TruncatesOnTableBoundaries) {
    const SchemaModel model = ingest_database_file(formula_one_db(), 3);
    const std::string full = render_for_prompt(model, 100000);
    const std::string cut = render_for_prompt(model, 400);
    ASSERT_NE(cut.find(kTruncationMarker), std::string::npos);
    const std::string kept = cut.substr(0, cut.find(kTruncationMarker));
    EXPECT_EQ(full.rfind(kept, 0), 0u) << "kept text must be a prefix of the full rendering";
    EXPECT_TRUE(kept.empty() || kept.back() == '\n');
    EXPECT_NE(cut.find("of 6 tables omitted"), std::string::npos);
}

TEST(Catalog, LoadsBundledDirectory) {
    const SchemaCatalog& c = catalog();
    EXPECT_EQ(c.ids(), (std::vector<std::string>{"california_schools", "formula_one"}));
    EXPECT_EQ(c.find("nope"), nullptr);
    EXPECT_EQ(c.find("formula_one")->source.kind, SchemaSourceKind::DatabaseFile);
}
