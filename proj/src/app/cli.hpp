#pragma once

#include <string>
#include <vector>

namespace qdspin::app {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,     // bad arguments or configuration
  kAnalysis = 3,  // fit failed to converge or was degenerate
  kIo = 4,
};

/// Environment variable naming the config file used when -c is absent.
inline constexpr const char* kConfigEnv = "QDSPIN_CONFIG";

int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

/// Writes `summary.txt` in `dir` from the reports found there.
int run_report(const std::string& dir);

}  // namespace qdspin::app
