#include "plurihop/log.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace plurihop {

std::shared_ptr<spdlog::logger> logger() {
    static auto instance = [] {
        auto l = spdlog::stderr_color_mt("plurihop");
        if (const char* level = std::getenv("PLURIHOP_LOG_LEVEL")) {
            l->set_level(spdlog::level::from_str(level));
        } else {
            l->set_level(spdlog::level::warn);
        }
        return l;
    }();
    return instance;
}

}  // namespace plurihop
