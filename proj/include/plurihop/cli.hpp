#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "plurihop/config.hpp"

namespace plurihop {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line `args` (without the program name). `env` is
/// consulted for PLURIHOP_* overrides.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env());

}  // namespace plurihop
