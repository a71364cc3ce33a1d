#pragma once

#include <iosfwd>

namespace lightnorm {

/// Exit codes of the command-line tool, one per error class.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitFormat = 4,
  kExitShape = 5,
  kExitDomain = 6,
  kExitIo = 7,
};

/// Entry point of the `lightnorm` tool. Reports go to `out`, diagnostics
/// to `err`; the return value is the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lightnorm
