#pragma once

// Minimal RAII wrapper over one SQLite connection. All access goes through
// transaction(), which serialises callers on a mutex.

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <type_traits>

struct sqlite3;
struct sqlite3_stmt;

namespace avqoe {

class Db;

class Stmt {
public:
    Stmt(sqlite3* db, const std::string& sql);
    ~Stmt();
    Stmt(const Stmt&) = delete;
    Stmt& operator=(const Stmt&) = delete;

    Stmt& bind(int index, std::int64_t value);
    Stmt& bind(int index, int value) { return bind(index, static_cast<std::int64_t>(value)); }
    Stmt& bind(int index, const std::string& value);
    Stmt& bind(int index, const char* value) { return bind(index, std::string(value)); }
    Stmt& bind(int index, std::nullopt_t);
    template <class T>
    Stmt& bind(int index, const std::optional<T>& value) {
        return value ? bind(index, *value) : bind(index, std::nullopt);
    }

    /// True while a row is available.
    bool step();
    /// Runs a statement that returns no rows, then resets it for reuse.
    void run();
    void reset();

    std::int64_t int64(int col) const;
    std::string text(int col) const;
    bool is_null(int col) const;
    std::optional<std::int64_t> opt_int64(int col) const;

private:
    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

class Db {
public:
    explicit Db(const std::filesystem::path& path);
    ~Db();
    Db(const Db&) = delete;
    Db& operator=(const Db&) = delete;

    /// Runs f inside BEGIN IMMEDIATE ... COMMIT; rolls back if f throws.
    template <class F>
    decltype(auto) transaction(F&& f) {
        std::lock_guard lock(mu_);
        exec("BEGIN IMMEDIATE");
        try {
            if constexpr (std::is_void_v<decltype(f())>) {
                f();
                exec("COMMIT");
            } else {
                auto result = f();
                exec("COMMIT");
                return result;
            }
        } catch (...) {
            exec("ROLLBACK");
            throw;
        }
    }

    void exec(const std::string& sql);
    Stmt prepare(const std::string& sql) { return Stmt(db_, sql); }

private:
    sqlite3* db_ = nullptr;
    std::mutex mu_;
};

}  // namespace avqoe
