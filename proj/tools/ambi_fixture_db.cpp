// Builds a SQLite file from a SQL script: ambi_fixture_db <script.sql> <out.sqlite>
#include <sqlite3.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

int main(int argc, char** argv) {
    if (argc != 3) {
        std::fprintf(stderr, "usage: %s <script.sql> <out.sqlite>\n", argv[0]);
        return 2;
    }
    std::ifstream in(argv[1]);
    if (!in) {
        std::fprintf(stderr, "cannot read %s\n", argv[1]);
        return 1;
    }
    std::ostringstream script;
    script << in.rdbuf();
    std::filesystem::remove(argv[2]);
    sqlite3* db = nullptr;
    if (sqlite3_open(argv[2], &db) != SQLITE_OK) {
        std::fprintf(stderr, "cannot create %s\n", argv[2]);
        return 1;
    }
    char* message = nullptr;
    const int rc = sqlite3_exec(db, script.str().c_str(), nullptr, nullptr, &message);
    if (rc != SQLITE_OK) {
        std::fprintf(stderr, "%s: %s\n", argv[1], message ? message : "error");
        sqlite3_free(message);
        sqlite3_close(db);
        std::filesystem::remove(argv[2]);
        return 1;
    }
    sqlite3_close(db);
    return 0;
}
