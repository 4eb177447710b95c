#pragma once

#include <string>
#include <vector>

namespace fsmle {

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_config = 2, exit_divergence = 3, exit_verification = 4 };

/// Entry point of the `fsmle` tool. argv[0] is the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace fsmle
