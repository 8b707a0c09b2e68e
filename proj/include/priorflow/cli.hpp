#pragma once

#include <ostream>
#include <span>
#include <string>

namespace priorflow::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 1,
  kDataError = 2,
  kVerificationFailure = 3,
};

/// Runs the command line `args` (args[0] is the program name). Reports and
/// tables go to `out` unless an --out path is given; diagnostics and the
/// resolved configuration go to `err`.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

}  // namespace priorflow::cli
