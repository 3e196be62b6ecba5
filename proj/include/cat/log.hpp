#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

// Minimal stderr logger. Level comes from CAT_UDA_LOG={error,info,debug}
// (default error); warnings always print.

namespace cat::log {

enum class Level : int { error = 0, info = 1, debug = 2 };

inline std::atomic<int>& level_slot() {
    static std::atomic<int> lvl{-1};  // -1 = uninitialized
    return lvl;
}

inline Level level() {
    int v = level_slot().load(std::memory_order_relaxed);
    if (v < 0) {
        v = 0;
        if (const char* env = std::getenv("CAT_UDA_LOG")) {
            if (std::strcmp(env, "info") == 0) v = 1;
            else if (std::strcmp(env, "debug") == 0) v = 2;
        }
        level_slot().store(v, std::memory_order_relaxed);
    }
    return static_cast<Level>(v);
}

inline void set_level(Level l) { level_slot().store(static_cast<int>(l), std::memory_order_relaxed); }

inline void error(const std::string& msg) { std::fprintf(stderr, "[cat-uda] error: %s\n", msg.c_str()); }
inline void warn(const std::string& msg) { std::fprintf(stderr, "[cat-uda] warning: %s\n", msg.c_str()); }
inline void info(const std::string& msg) {
    if (level() >= Level::info) std::fprintf(stderr, "[cat-uda] %s\n", msg.c_str());
}
inline void debug(const std::string& msg) {
    if (level() >= Level::debug) std::fprintf(stderr, "[cat-uda] debug: %s\n", msg.c_str());
}

}  // namespace cat::log
