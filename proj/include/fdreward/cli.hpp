#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fdreward {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitEndpoint = 3;

// Runs the command line `args` (without the program name). Summaries go to
// `out`, error reports to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace fdreward
