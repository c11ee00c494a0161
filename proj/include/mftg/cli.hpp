#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mftg {

inline constexpr const char* kToolVersion = "robust-mftg 0.1.0";

// Exit codes: 0 success / verdict reached, 2 input error, 3 numerical
// failure (non-finite encountered).
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

// Runs one CLI invocation; args excludes the program name. Output streams
// are injectable so tests can run commands in-process.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace mftg
