#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace promptrec::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kValidation = 2,
  kRuntime = 3,
};

/// Runs one command line (args[0] is the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace promptrec::cli
