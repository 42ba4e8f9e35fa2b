#pragma once

#include <ostream>
#include <string>
#include <vector>

// Command-line front end. Subcommands: train, evaluate, predict, gradcheck,
// synth. Exit codes: 0 success, 1 failed gradient check or internal error,
// 2 invalid flags or configuration, 3 data errors.

namespace clids::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;

/// Environment variable consulted for the default --seed.
inline constexpr const char* kSeedEnv = "CLIDS_SEED";

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clids::cli
