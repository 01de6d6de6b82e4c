#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mzx::cli {

enum ExitCode : int {
  kOk = 0,
  kInvalid = 1,          // parse/validation error, bad flags, unknown or bound sweep parameter
  kIoError = 2,
  kZeroProbability = 3,  // --given names an event with zero probability
  kBadSteps = 4,         // sweep --steps < 2
};

/// Entry point of the `mzx` tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mzx::cli
