#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gridsweep::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Run `gridsweep` with `args` (without the program name). Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gridsweep::cli
