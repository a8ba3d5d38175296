#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "piece/planner/config.hpp"

namespace piece::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

// Flat "key = value" lines; '#' starts a comment. Throws UsageError on a line
// without '=' and DataError when the file cannot be read.
planner::ConfigEntries read_config_file(const std::filesystem::path& path);

// Commands: gen-synthetic, train, summarize, evaluate, inspect-plan.
// `args` excludes the program name. Returns the exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace piece::app
