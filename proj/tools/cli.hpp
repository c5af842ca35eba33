#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace exerclass::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point for `exerclass <subcommand> [flags]`. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace exerclass::cli
