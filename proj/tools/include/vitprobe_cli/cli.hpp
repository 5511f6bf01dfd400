#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vitprobe::cli {

/// Runs one invocation; args excludes the program name. Returns the process
/// exit code. Failures print "<CATEGORY>: message" to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vitprobe::cli
