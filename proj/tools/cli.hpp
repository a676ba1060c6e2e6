#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace derail::cli {

enum ExitCode { kOk = 0, kUserError = 1, kRuntimeError = 2 };

// Runs one command line (without the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace derail::cli
