#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mrfseg {

/// Environment variable holding the default worker-thread count.
inline constexpr const char* kThreadsEnv = "MRFSEG_THREADS";

/// Dispatches `train`, `simulate`, `segment`, `score` or `benchmark`.
/// args excludes the program name. Returns the process exit status; on
/// failure nothing is left at any requested output path.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mrfseg
