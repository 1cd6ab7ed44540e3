#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sca::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFault = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable naming the default artifact directory.
inline constexpr const char* kOutputDirEnv = "SCA_OUTPUT_DIR";

/// Entry point shared by the executable and the tests; args exclude argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sca::cli
