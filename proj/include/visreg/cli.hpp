#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace visreg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line `args` (args[0] is the program name). Normal output
/// goes to `out`, diagnostics to `err`. Returns the process exit code:
/// 0 success, 1 runtime or numerical failure, 2 usage or validation error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace visreg
