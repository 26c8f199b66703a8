#include "quadtrack/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <string_view>

namespace quadtrack::log {

namespace {

spdlog::level::level_enum level_from_env() {
    const char* v = std::getenv("QUAD_LOG");
    if (v == nullptr) return spdlog::level::info;
    const std::string_view s(v);
    if (s == "error") return spdlog::level::err;
    if (s == "debug") return spdlog::level::debug;
    return spdlog::level::info;
}

std::shared_ptr<spdlog::logger> make_logger() {
    auto l = spdlog::stderr_color_mt("quadtrack");
    l->set_pattern("[%l] %v");
    l->set_level(level_from_env());
    return l;
}

}  // namespace

spdlog::logger& logger() {
    static std::shared_ptr<spdlog::logger> instance = make_logger();
    return *instance;
}

void configure_from_env() { logger().set_level(level_from_env()); }

}  // namespace quadtrack::log
