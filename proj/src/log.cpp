#include "reachstep/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace reachstep {

namespace {

LogLevel from_env() {
    const char* env = std::getenv("REACHSTEP_LOG");
    if (!env) return LogLevel::Warn;
    std::string v(env);
    if (v == "error") return LogLevel::Error;
    if (v == "info") return LogLevel::Info;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
}

std::atomic<int>& threshold() {
    static std::atomic<int> t{static_cast<int>(from_env())};
    return t;
}

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(threshold().load()); }

void set_log_level(LogLevel level) { threshold().store(static_cast<int>(level)); }

void log(LogLevel level, const std::string& message) {
    if (static_cast<int>(level) > threshold().load()) return;
    static std::mutex mu;
    static const char* tags[] = {"error", "warn", "info", "debug"};
    std::lock_guard lock(mu);
    std::cerr << "[reachstep " << tags[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace reachstep
