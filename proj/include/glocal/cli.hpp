#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace glocal {

/// Entry point of the `glocal` tool. `args` excludes the program name.
/// Returns the process exit code; errors are reported on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace glocal
