#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mur/error.hpp"

namespace mur::cli {

enum ExitCode : int {
  kSuccess = 0,
  kCheckFailed = 1,  // verify: some report unsatisfied
  kConfigError = 2,
  kDataError = 3,
  kBackendError = 4,
};

int exit_code_for(ErrorCode code);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mur::cli
