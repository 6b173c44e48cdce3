#ifndef NSF_CLI_HPP_
#define NSF_CLI_HPP_

#include <string>
#include <vector>

namespace nsf {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // the run itself failed (numerics, I/O during writing)
inline constexpr int kExitUsage = 2;    // bad flags, missing or malformed inputs, unsupported model

/// Entry point of the `nsf` tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace nsf

#endif  // NSF_CLI_HPP_
