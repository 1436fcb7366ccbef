#pragma once

// Minimal run log. Messages go to stderr unless a sink is installed (the
// experiment runner redirects them into run.log).

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace narc::log {

using Sink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& mutex() {
    static std::mutex m;
    return m;
}
inline Sink& sink() {
    static Sink s;
    return s;
}
inline bool& quiet() {
    static bool q = false;
    return q;
}
}  // namespace detail

inline void set_sink(Sink s) {
    std::lock_guard lock(detail::mutex());
    detail::sink() = std::move(s);
}

/// Suppresses stderr output when no sink is installed (used by tests).
inline void set_quiet(bool q) {
    std::lock_guard lock(detail::mutex());
    detail::quiet() = q;
}

inline void write(const std::string& level, const std::string& msg) {
    std::lock_guard lock(detail::mutex());
    const std::string line = "[" + level + "] " + msg;
    if (detail::sink())
        detail::sink()(line);
    else if (!detail::quiet())
        std::cerr << line << '\n';
}

inline void info(const std::string& msg) { write("info", msg); }
inline void warn(const std::string& msg) { write("warn", msg); }

}  // namespace narc::log
