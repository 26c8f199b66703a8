#pragma once

#include <spdlog/spdlog.h>

namespace quadtrack::log {

/// Logger writing to stderr; level from QUAD_LOG (error, info, debug), default info.
spdlog::logger& logger();

/// Re-reads QUAD_LOG.
void configure_from_env();

template <typename... Args>
void error(fmt::format_string<Args...> fmt, Args&&... args) {
    logger().error(fmt, std::forward<Args>(args)...);
}
template <typename... Args>
void warn(fmt::format_string<Args...> fmt, Args&&... args) {
    logger().warn(fmt, std::forward<Args>(args)...);
}
template <typename... Args>
void info(fmt::format_string<Args...> fmt, Args&&... args) {
    logger().info(fmt, std::forward<Args>(args)...);
}
template <typename... Args>
void debug(fmt::format_string<Args...> fmt, Args&&... args) {
    logger().debug(fmt, std::forward<Args>(args)...);
}

}  // namespace quadtrack::log
