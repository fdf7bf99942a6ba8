#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace plurihop {

/// Library logger; writes to stderr so stdout stays machine-readable.
std::shared_ptr<spdlog::logger> logger();

}  // namespace plurihop
