#pragma once

// Line-delimited structured log records:
//   {"level":"info","session":"S01","channel":2,"stage":"cluster","wall_ms":3.1,"msg":"..."}

#include <chrono>
#include <iostream>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

namespace mcdiar {

enum class LogLevel { debug = 0, info = 1, warning = 2, error = 3, off = 4 };

struct LogContext {
    std::string session;
    std::optional<int> channel;
    std::string stage;
};

class Logger {
public:
    static Logger& instance() {
        static Logger logger;
        return logger;
    }

    void set_sink(std::ostream* sink) {
        std::lock_guard lock(mutex_);
        sink_ = sink;
    }
    void set_level(LogLevel level) {
        std::lock_guard lock(mutex_);
        level_ = level;
    }

    void log(LogLevel level, const LogContext& ctx, const std::string& msg, std::optional<double> wall_ms = {}) {
        std::lock_guard lock(mutex_);
        if (sink_ == nullptr || level < level_) return;
        nlohmann::json rec;
        rec["level"] = name(level);
        if (!ctx.session.empty()) rec["session"] = ctx.session;
        if (ctx.channel) rec["channel"] = *ctx.channel;
        if (!ctx.stage.empty()) rec["stage"] = ctx.stage;
        if (wall_ms) rec["wall_ms"] = *wall_ms;
        rec["msg"] = msg;
        *sink_ << rec.dump() << '\n';
    }

private:
    Logger() = default;

    static const char* name(LogLevel level) {
        switch (level) {
            case LogLevel::debug: return "debug";
            case LogLevel::info: return "info";
            case LogLevel::warning: return "warning";
            case LogLevel::error: return "error";
            case LogLevel::off: return "off";
        }
        return "?";
    }

    std::mutex mutex_;
    std::ostream* sink_ = &std::cerr;
    LogLevel level_ = LogLevel::info;
};

inline void log_info(const LogContext& ctx, const std::string& msg, std::optional<double> wall_ms = {}) {
    Logger::instance().log(LogLevel::info, ctx, msg, wall_ms);
}
inline void log_warning(const LogContext& ctx, const std::string& msg) {
    Logger::instance().log(LogLevel::warning, ctx, msg);
}
inline void log_error(const LogContext& ctx, const std::string& msg) {
    Logger::instance().log(LogLevel::error, ctx, msg);
}

/// Logs the elapsed wall time of a stage when destroyed.
class StageTimer {
public:
    explicit StageTimer(LogContext ctx) : ctx_(std::move(ctx)), start_(std::chrono::steady_clock::now()) {}
    StageTimer(const StageTimer&) = delete;
    StageTimer& operator=(const StageTimer&) = delete;
    ~StageTimer() {
        const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start_;
        Logger::instance().log(LogLevel::debug, ctx_, "done", elapsed.count());
    }

private:
    LogContext ctx_;
    std::chrono::steady_clock::time_point start_;
};

}  // namespace mcdiar
