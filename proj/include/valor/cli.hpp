#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace valor::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;      // I/O or runtime failure
inline constexpr int kExitUsage = 2;        // bad flag, subcommand, or config key
inline constexpr int kExitCheckFailed = 3;  // gradcheck above tolerance

// args excludes the program name. JSON reports go to `out`; logs and the
// single-line "error: ..." message go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace valor::cli
