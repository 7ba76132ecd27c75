#pragma once

#include "telecouple/error.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace telecouple {

/// Process exit codes by failure family.
enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitIo = 2,          ///< missing or unreadable input
  kExitValidation = 3,  ///< schema, config or argument errors
  kExitNumerical = 4,   ///< degenerate data or solver failure
};

int exit_code_for(ErrorCode code);

/// Runs one subcommand. `args` excludes the program name. Diagnostics go to
/// `err`, progress lines to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace telecouple
