#pragma once

#include "ambi/engine.hpp"
#include "ambi/llm_gateway.hpp"
#include "ambi/schema_catalog.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ambi::testing {

inline std::filesystem::path fixture_dir() { return AMBI_FIXTURE_DIR; }
inline std::filesystem::path db_dir() { return fixture_dir() / "db"; }
inline std::filesystem::path formula_one_db() { return db_dir() / "formula_one.sqlite"; }
inline std::filesystem::path main_script() { return fixture_dir() / "llm_script.json"; }
inline std::filesystem::path cases_path() { return fixture_dir() / "cases.jsonl"; }

inline std::shared_ptr<LlmGateway> scripted_gateway(const std::filesystem::path& script = main_script()) {
    return std::make_shared<LlmGateway>(std::make_shared<ScriptedBackend>(load_script(script)));
}

inline std::shared_ptr<LlmGateway> scripted_gateway(const nlohmann::json& entries) {
    return std::make_shared<LlmGateway>(std::make_shared<ScriptedBackend>(parse_script(entries)));
}

inline const SchemaCatalog& catalog() {
    static const SchemaCatalog instance = SchemaCatalog::load_directory(db_dir());
    return instance;
}

inline std::shared_ptr<const SchemaModel> formula_one() { return catalog().find("formula_one"); }

inline nlohmann::json entry(const char* stage, std::string match, std::string response,
                            bool consume_once = false) {
    nlohmann::json e = {{"stage", stage}, {"match_substring", std::move(match)},
                        {"response", std::move(response)}};
    if (consume_once) e["consume_once"] = true;
    return e;
}

inline const std::string kRunningExample =
    "How many drivers born after the end of the Vietnam War have been ranked 2?";

}  // namespace ambi::testing
