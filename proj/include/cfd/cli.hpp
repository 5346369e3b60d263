#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cfd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Entry point of the `cfd` tool. args[0] is the program name. Data goes to
// `out`, diagnostics and prompts to `err`; `in` feeds the chat REPL.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace cfd::cli
