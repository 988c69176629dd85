#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace kgllm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitTransport = 3;

/// Parses `args` (without the program name) and runs one subcommand.
/// Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kgllm
