#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mk::cli {

enum ExitCode { ok = 0, validation_error = 2, numerical_failure = 3 };

/// Runs one subcommand. The summary line goes to out, diagnostics and usage
/// help to err. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

std::vector<std::string> subcommands();

}  // namespace mk::cli
