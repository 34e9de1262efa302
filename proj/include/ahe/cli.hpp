#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ahe {

// Subcommands: gauduchon, stability, solve, destabilize, selftest. Returns the process exit code:
// 0 success, 1 validation error, 2 solver failure, 3 internal invariant violation.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ahe
