#pragma once

#include <ostream>
#include <span>
#include <string>

namespace splicemix::cli {

enum ExitCode : int { kSuccess = 0, kUsage = 1, kRuntime = 2 };

/// Runs one invocation; argv[0] is the program name. Output goes to `out`,
/// diagnostics to `err`.
int run(std::span<const std::string> argv, std::ostream& out, std::ostream& err);

/// SPLICEMIX_THREADS if set and positive, else 1.
std::size_t worker_limit();

}  // namespace splicemix::cli
