#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace pulmo::cli {

enum ExitCode : int { kOk = 0, kUserError = 1, kDataError = 2, kInternalError = 3 };

/// Runs one command line (program name excluded).
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace pulmo::cli
