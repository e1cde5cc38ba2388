#pragma once

#include <string>
#include <vector>

namespace fedsim {

// Entry point behind the fedsim binary. args excludes the program name.
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
int run_cli(const std::vector<std::string> & args);

} // namespace fedsim
