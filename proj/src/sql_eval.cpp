#include "ambi/sql_eval.hpp"

#include "ambi/errors.hpp"
#include "sqlite_util.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace ambi {

using nlohmann::json;

namespace {

const std::set<std::string, std::less<>>& keywords() {
    static const std::set<std::string, std::less<>> kKeywords = {
        "ABORT",     "ALL",       "ALTER",     "AND",       "ANY",        "AS",
        "ASC",       "BETWEEN",   "BY",        "CASE",      "CAST",       "COLLATE",
        "CREATE",    "CROSS",     "CURRENT_DATE", "CURRENT_TIME", "CURRENT_TIMESTAMP",
        "DEFAULT",   "DELETE",    "DESC",      "DISTINCT",  "DROP",       "ELSE",
        "END",       "ESCAPE",    "EXCEPT",    "EXISTS",    "FALSE",      "FETCH",
        "FILTER",    "FIRST",     "FOLLOWING", "FOR",       "FROM",       "FULL",
        "GLOB",      "GROUP",     "GROUPS",    "HAVING",    "IF",         "ILIKE",
        "IN",        "INDEX",     "INNER",     "INSERT",    "INTERSECT",  "INTERVAL",
        "INTO",      "IS",        "ISNULL",    "JOIN",      "LAST",       "LEFT",
        "LIKE",      "LIMIT",     "MATCH",     "NATURAL",   "NEXT",       "NOT",
        "NOTNULL",   "NULL",      "NULLS",     "OF",        "OFFSET",     "ON",
        "ONLY",      "OR",        "ORDER",     "OUTER",     "OVER",       "PARTITION",
        "PRECEDING", "RANGE",     "RECURSIVE", "REGEXP",    "REPLACE",    "RIGHT",
        "ROW",       "ROWS",      "SELECT",    "SET",       "TABLE",      "THEN",
        "TOP",       "TRUE",      "UNBOUNDED", "UNION",     "UPDATE",     "USING",
        "VALUES",    "VIEW",      "WHEN",      "WHERE",     "WINDOW",     "WITH",
    };
    return kKeywords;
}

bool is_keyword(std::string_view upper) { return keywords().count(upper) > 0; }

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' ||
           static_cast<unsigned char>(c) >= 0x80;
}
bool is_ident_char(char c) { return is_ident_start(c) || is_digit(c) || c == '$'; }

bool is_numeric_literal(const SqlToken& token) {
    return token.kind == TokenKind::Literal && !token.text.empty() &&
           (is_digit(token.text.front()) || token.text.front() == '.');
}

std::string normalize_number(std::string_view raw) {
    if (raw.size() > 2 && raw[0] == '0' && (raw[1] == 'x' || raw[1] == 'X')) {
        return "0x" + to_lower(raw.substr(2));
    }
    std::string mantissa(raw);
    std::string exponent;
    if (auto e = raw.find_first_of("eE"); e != std::string_view::npos) {
        mantissa = std::string(raw.substr(0, e));
        std::string_view exp = raw.substr(e + 1);
        std::string sign;
        if (!exp.empty() && (exp.front() == '+' || exp.front() == '-')) {
            if (exp.front() == '-') sign = "-";
            exp.remove_prefix(1);
        }
        while (exp.size() > 1 && exp.front() == '0') exp.remove_prefix(1);
        exponent = "e" + sign + std::string(exp);
    }
    std::string int_part = mantissa;
    std::string frac_part;
    if (auto dot = mantissa.find('.'); dot != std::string::npos) {
        int_part = mantissa.substr(0, dot);
        frac_part = mantissa.substr(dot + 1);
    }
    while (int_part.size() > 1 && int_part.front() == '0') int_part.erase(0, 1);
    if (int_part.empty()) int_part = "0";
    while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();
    std::string out = int_part;
    if (!frac_part.empty()) out += "." + frac_part;
    if (exponent == "e0" || exponent == "e-0") exponent.clear();
    return out + exponent;
}

class Lexer {
public:
    explicit Lexer(std::string_view sql) : sql_(sql) {}

    std::vector<SqlToken> run() {
        std::vector<SqlToken> tokens;
        while (pos_ < sql_.size()) {
            const char c = sql_[pos_];
            if (is_space(c)) {
                ++pos_;
            } else if (c == '-' && peek(1) == '-') {
                while (pos_ < sql_.size() && sql_[pos_] != '\n') ++pos_;
            } else if (c == '/' && peek(1) == '*') {
                const std::size_t start = pos_;
                const std::size_t close = sql_.find("*/", pos_ + 2);
                if (close == std::string_view::npos) throw LexError(start, "unterminated comment");
                pos_ = close + 2;
            } else if (c == '\'') {
                tokens.push_back({TokenKind::Literal, quoted('\'', '\'')});
            } else if ((c == 'x' || c == 'X') && peek(1) == '\'') {
                ++pos_;
                tokens.push_back({TokenKind::Literal, "X" + quoted('\'', '\'')});
            } else if (c == '"' || c == '`') {
                tokens.push_back({TokenKind::Identifier, to_lower(unquote(quoted(c, c)))});
            } else if (c == '[') {
                tokens.push_back({TokenKind::Identifier, to_lower(unquote(quoted('[', ']')))});
            } else if (is_digit(c) || (c == '.' && is_digit(peek(1)))) {
                tokens.push_back({TokenKind::Literal, normalize_number(number())});
            } else if (is_ident_start(c)) {
                const std::size_t start = pos_;
                while (pos_ < sql_.size() && is_ident_char(sql_[pos_])) ++pos_;
                const std::string_view word = sql_.substr(start, pos_ - start);
                const std::string upper = to_upper(word);
                if (is_keyword(upper)) {
                    tokens.push_back({TokenKind::Keyword, upper});
                } else {
                    tokens.push_back({TokenKind::Identifier, to_lower(word)});
                }
            } else if (c == '(' || c == ')' || c == ',' || c == ';' || c == '.') {
                tokens.push_back({TokenKind::Punct, std::string(1, c)});
                ++pos_;
            } else {
                tokens.push_back({TokenKind::Operator, op()});
            }
        }
        return tokens;
    }

private:
    char peek(std::size_t ahead) const {
        return pos_ + ahead < sql_.size() ? sql_[pos_ + ahead] : '\0';
    }

    // Reads a quoted run starting at pos_ (doubling the close char escapes
    // it) and returns it including the delimiters.
    std::string quoted(char open, char close) {
        const std::size_t start = pos_;
        ++pos_;
        while (pos_ < sql_.size()) {
            if (sql_[pos_] == close) {
                if (open == close && peek(1) == close) {
                    pos_ += 2;
                    continue;
                }
                ++pos_;
                return std::string(sql_.substr(start, pos_ - start));
            }
            ++pos_;
        }
        throw LexError(start, open == '\'' ? "unterminated string literal"
                                           : "unterminated quoted identifier");
    }

    static std::string unquote(const std::string& q) {
        const char close = q.back();
        std::string out;
        for (std::size_t i = 1; i + 1 < q.size(); ++i) {
            out.push_back(q[i]);
            if (q[i] == close && q[i + 1] == close && i + 2 < q.size()) ++i;
        }
        return out;
    }

    std::string_view number() {
        const std::size_t start = pos_;
        if (sql_[pos_] == '0' && (peek(1) == 'x' || peek(1) == 'X')) {
            pos_ += 2;
            while (pos_ < sql_.size() && std::isxdigit(static_cast<unsigned char>(sql_[pos_]))) ++pos_;
            return sql_.substr(start, pos_ - start);
        }
        while (pos_ < sql_.size() && is_digit(sql_[pos_])) ++pos_;
        if (pos_ < sql_.size() && sql_[pos_] == '.') {
            ++pos_;
            while (pos_ < sql_.size() && is_digit(sql_[pos_])) ++pos_;
        }
        if (pos_ < sql_.size() && (sql_[pos_] == 'e' || sql_[pos_] == 'E')) {
            std::size_t look = pos_ + 1;
            if (look < sql_.size() && (sql_[look] == '+' || sql_[look] == '-')) ++look;
            if (look < sql_.size() && is_digit(sql_[look])) {
                pos_ = look;
                while (pos_ < sql_.size() && is_digit(sql_[pos_])) ++pos_;
            }
        }
        return sql_.substr(start, pos_ - start);
    }

    std::string op() {
        static constexpr std::string_view kTwoChar[] = {"<=", ">=", "<>", "!=", "==",
                                                         "||", "<<", ">>", "->"};
        for (std::string_view candidate : kTwoChar) {
            if (sql_.substr(pos_, 2) == candidate) {
                pos_ += 2;
                return std::string(candidate);
            }
        }
        return std::string(1, sql_[pos_++]);
    }

    std::string_view sql_;
    std::size_t pos_ = 0;
};

bool needs_quoting(const std::string& identifier) {
    if (identifier.empty() || !is_ident_start(identifier.front())) return true;
    for (char c : identifier) {
        if (!is_ident_char(c) || (c >= 'A' && c <= 'Z')) return true;
    }
    return is_keyword(to_upper(identifier));
}

// A unary plus is dropped when it starts an expression and precedes a number.
bool unary_position(const std::vector<SqlToken>& out) {
    if (out.empty()) return true;
    const SqlToken& prev = out.back();
    if (prev.kind == TokenKind::Operator || prev.kind == TokenKind::Keyword) return true;
    return prev.kind == TokenKind::Punct && prev.text != ")";
}

}  // namespace

std::string_view token_kind_label(TokenKind kind) {
    switch (kind) {
        case TokenKind::Keyword: return "keyword";
        case TokenKind::Identifier: return "identifier";
        case TokenKind::Literal: return "literal";
        case TokenKind::Operator: return "operator";
        case TokenKind::Punct: return "punct";
    }
    return "?";
}

CanonicalSql canonicalize(std::string_view sql) {
    if (trim(sql).empty()) throw std::invalid_argument("cannot canonicalize empty SQL");
    std::vector<SqlToken> raw = Lexer(sql).run();
    CanonicalSql canonical;
    canonical.source = std::string(sql);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i].kind == TokenKind::Operator && raw[i].text == "+" && i + 1 < raw.size() &&
            is_numeric_literal(raw[i + 1]) && unary_position(canonical.tokens)) {
            continue;
        }
        canonical.tokens.push_back(std::move(raw[i]));
    }
    while (!canonical.tokens.empty() && canonical.tokens.back().kind == TokenKind::Punct &&
           canonical.tokens.back().text == ";") {
        canonical.tokens.pop_back();
    }
    if (canonical.tokens.empty()) throw std::invalid_argument("SQL contains no statement");
    return canonical;
}

std::string render(const CanonicalSql& canonical) {
    std::string out;
    for (const SqlToken& token : canonical.tokens) {
        if (!out.empty()) out += ' ';
        if (token.kind == TokenKind::Identifier && needs_quoting(token.text)) {
            out += '"';
            for (char c : token.text) {
                if (c == '"') out += '"';
                out += c;
            }
            out += '"';
        } else {
            out += token.text;
        }
    }
    return out;
}

json to_json(const ComparisonReport& report) {
    json doc = {{"exact", report.exact}, {"notes", report.notes}};
    doc["execution"] = report.execution ? json(*report.execution) : json(nullptr);
    if (report.first_divergence) {
        doc["first_divergence"] = {{"index", report.first_divergence->index},
                                   {"gold_token", report.first_divergence->gold_token},
                                   {"pred_token", report.first_divergence->pred_token}};
    } else {
        doc["first_divergence"] = nullptr;
    }
    return doc;
}

ComparisonReport exact_match(std::string_view pred, std::string_view gold) {
    const CanonicalSql p = canonicalize(pred);
    const CanonicalSql g = canonicalize(gold);
    ComparisonReport report;
    report.exact = p.tokens == g.tokens;
    if (!report.exact) {
        const std::size_t n = std::min(p.tokens.size(), g.tokens.size());
        std::size_t i = 0;
        while (i < n && p.tokens[i] == g.tokens[i]) ++i;
        report.first_divergence = Divergence{
            i, i < g.tokens.size() ? g.tokens[i].text : "<end>",
            i < p.tokens.size() ? p.tokens[i].text : "<end>"};
    }
    return report;
}

namespace {

struct Deadline {
    std::chrono::steady_clock::time_point at;
};

int progress_check(void* arg) {
    const auto* deadline = static_cast<const Deadline*>(arg);
    return std::chrono::steady_clock::now() > deadline->at ? 1 : 0;
}

std::string cell_key(sqlite3_stmt* stmt, int col) {
    switch (sqlite3_column_type(stmt, col)) {
        case SQLITE_NULL: return "N";
        case SQLITE_INTEGER: return "#" + std::to_string(sqlite3_column_int64(stmt, col));
        case SQLITE_FLOAT: {
            const double v = sqlite3_column_double(stmt, col);
            if (std::isfinite(v) && std::floor(v) == v && std::fabs(v) < 9007199254740992.0) {
                return "#" + std::to_string(static_cast<long long>(v));
            }
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            return std::string("#") + buf;
        }
        case SQLITE_BLOB: {
            const auto* bytes = static_cast<const unsigned char*>(sqlite3_column_blob(stmt, col));
            const int n = sqlite3_column_bytes(stmt, col);
            std::string out = "B";
            char hex[3];
            for (int i = 0; i < n; ++i) {
                std::snprintf(hex, sizeof(hex), "%02x", bytes[i]);
                out += hex;
            }
            return out;
        }
        default: return "T" + sqlite::column_text(stmt, col);
    }
}

struct ResultSet {
    int arity = 0;
    std::vector<std::string> rows;
};

ResultSet run_query(sqlite3* db, std::string_view sql, ExecSide side, const Deadline& deadline) {
    sqlite3_progress_handler(db, 1000, progress_check, const_cast<Deadline*>(&deadline));
    const std::string text(sql);
    sqlite3_stmt* raw = nullptr;
    const char* tail = nullptr;
    const int rc = sqlite3_prepare_v2(db, text.c_str(), static_cast<int>(text.size()), &raw, &tail);
    sqlite::StmtHandle stmt(raw);
    if (rc != SQLITE_OK) throw ExecError(side, sqlite3_errmsg(db));
    if (!stmt) throw ExecError(side, "no statement to execute");
    for (const char* p = tail; p && *p; ++p) {
        if (!is_space(*p) && *p != ';') throw ExecError(side, "expected a single statement");
    }
    if (!sqlite3_stmt_readonly(stmt.get())) throw ExecError(side, "statement is not read-only");

    ResultSet result;
    result.arity = sqlite3_column_count(stmt.get());
    int step;
    while ((step = sqlite3_step(stmt.get())) == SQLITE_ROW) {
        std::string row;
        for (int c = 0; c < result.arity; ++c) {
            if (c > 0) row += '\x1f';
            row += cell_key(stmt.get(), c);
        }
        result.rows.push_back(std::move(row));
    }
    if (step != SQLITE_DONE) {
        if (step == SQLITE_INTERRUPT) throw ExecError(side, "statement timed out");
        throw ExecError(side, sqlite3_errmsg(db));
    }
    return result;
}

bool outermost_order_by(std::string_view gold) {
    const CanonicalSql canonical = canonicalize(gold);
    int depth = 0;
    for (std::size_t i = 0; i < canonical.tokens.size(); ++i) {
        const SqlToken& t = canonical.tokens[i];
        if (t.kind == TokenKind::Punct && t.text == "(") ++depth;
        if (t.kind == TokenKind::Punct && t.text == ")") --depth;
        if (depth == 0 && t.kind == TokenKind::Keyword && t.text == "ORDER" &&
            i + 1 < canonical.tokens.size() && canonical.tokens[i + 1].text == "BY") {
            return true;
        }
    }
    return false;
}

}  // namespace

bool execution_match(std::string_view pred, std::string_view gold, const std::filesystem::path& db,
                     std::chrono::milliseconds timeout) {
    std::string error;
    sqlite::DbHandle handle = sqlite::open_readonly(db, error);
    if (!handle) throw IoError(db.string() + ": " + error);
    sqlite3_exec(handle.get(), "PRAGMA query_only = 1", nullptr, nullptr, nullptr);

    const Deadline gold_deadline{std::chrono::steady_clock::now() + timeout};
    ResultSet gold_rows = run_query(handle.get(), gold, ExecSide::Gold, gold_deadline);
    const Deadline pred_deadline{std::chrono::steady_clock::now() + timeout};
    ResultSet pred_rows = run_query(handle.get(), pred, ExecSide::Pred, pred_deadline);

    if (gold_rows.arity != pred_rows.arity) return false;
    bool ordered = false;
    try {
        ordered = outermost_order_by(gold);
    } catch (const LexError& e) {
        throw ExecError(ExecSide::Gold, e.what());
    }
    if (!ordered) {
        std::sort(gold_rows.rows.begin(), gold_rows.rows.end());
        std::sort(pred_rows.rows.begin(), pred_rows.rows.end());
    }
    return gold_rows.rows == pred_rows.rows;
}

ComparisonReport compare_sql(std::string_view pred, std::string_view gold,
                             const std::optional<std::filesystem::path>& db) {
    ComparisonReport report;
    std::vector<std::string> notes;
    try {
        report = exact_match(pred, gold);
    } catch (const LexError& e) {
        notes.push_back(std::string("lex error: ") + e.what());
    } catch (const std::invalid_argument& e) {
        notes.push_back(e.what());
    }
    if (db) {
        try {
            report.execution = execution_match(pred, gold, *db);
        } catch (const ExecError& e) {
            notes.push_back(std::string("execution error (") + e.what() + ")");
        } catch (const IoError& e) {
            notes.push_back(e.what());
        }
    }
    report.notes = join(notes, "; ");
    return report;
}

}  // namespace ambi
