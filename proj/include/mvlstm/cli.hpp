#pragma once

#include <string>
#include <vector>

namespace mvlstm {

inline constexpr const char* kCliVersion = "mvlstm 0.1.0";

// Entry point behind the mvlstm binary. args excludes the program name.
// Exit codes: 0 success, 1 check/validation failure, 2 usage error.
int run_cli(const std::vector<std::string>& args);

}  // namespace mvlstm
