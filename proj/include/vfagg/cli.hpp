#pragma once

#include <iosfwd>

namespace vfagg {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

/// Entry point behind the `vfagg` executable; writes results to `out` and
/// diagnostics to `err`, and returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vfagg
