#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ambi {

enum class TokenKind { Keyword, Identifier, Literal, Operator, Punct };

std::string_view token_kind_label(TokenKind kind);

struct SqlToken {
    TokenKind kind;
    std::string text;

    bool operator==(const SqlToken&) const = default;
};

/// Normalized token stream: keywords upper-case, identifiers lower-case and
/// unquoted, string literals byte-exact, numbers normalized, no comments,
/// whitespace or trailing terminators.
struct CanonicalSql {
    std::vector<SqlToken> tokens;
    std::string source;
};

/// Throws LexError (with byte offset) on unterminated strings, quoted
/// identifiers or block comments, and std::invalid_argument on blank input.
CanonicalSql canonicalize(std::string_view sql);

/// Renders tokens back to SQL text that canonicalizes to the same stream.
std::string render(const CanonicalSql& canonical);

struct Divergence {
    std::size_t index = 0;
    std::string gold_token;  // "<end>" when the gold stream is shorter
    std::string pred_token;
};

struct ComparisonReport {
    bool exact = false;
    std::optional<bool> execution;
    std::optional<Divergence> first_divergence;
    std::string notes;
};

nlohmann::json to_json(const ComparisonReport& report);

/// Token-stream equality. Propagates LexError.
ComparisonReport exact_match(std::string_view pred, std::string_view gold);

inline constexpr std::chrono::milliseconds kDefaultExecTimeout{5000};

/// Runs both queries read-only and compares result multisets (sequences when
/// the gold query's outermost level has ORDER BY). Column names are ignored,
/// arity must match. Throws ExecError naming the failing side.
bool execution_match(std::string_view pred, std::string_view gold, const std::filesystem::path& db,
                     std::chrono::milliseconds timeout = kDefaultExecTimeout);

/// exact_match, plus execution_match when `db` is given. Lex and execution
/// errors are folded into the report's notes instead of being thrown.
ComparisonReport compare_sql(std::string_view pred, std::string_view gold,
                             const std::optional<std::filesystem::path>& db = std::nullopt);

}  // namespace ambi
