#pragma once

#include <string>
#include <vector>

namespace ntil::cli {

enum ExitCode : int {
  kSuccess = 0,
  kRuntimeError = 1,
  kContractViolation = 2,
  kVerificationFailure = 3,
};

inline constexpr const char* kToolVersion = "1.0.0";

/// Runs one command line (args exclude the program name).
int run(const std::vector<std::string>& args);

}  // namespace ntil::cli
