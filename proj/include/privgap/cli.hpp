#pragma once

#include <iosfwd>

namespace privgap {

/// Exit codes of the privgap tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Runs one subcommand. Normal output goes to `out`, diagnostics to `err`.
int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_command(int argc, const char* const* argv);

}  // namespace privgap
