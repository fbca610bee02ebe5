#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dissipic {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitInfeasible = 2, kExitProjectionFailed = 3 };

/// dissipic verify|synthesize|train|simulate <config.json> [--out DIR] [--seed N]
///          [--lti] [--t-rs X] [--backoff B]
/// `args` excludes the program name. Diagnostics go to `err`, a one-line
/// summary of the result to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dissipic
