#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace alignkit {

/// Entry point behind the alignkit binary. `args` excludes the program
/// name. Returns the process exit code: 0 on success, 1 on usage errors
/// (unknown flags, missing required options), 2 on runtime failures.
/// Streams are injectable so tests can run commands in-process.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Same, writing to std::cout / std::cerr.
int run_cli(const std::vector<std::string>& args);

}  // namespace alignkit
