#pragma once

#include <ostream>

namespace csearch::cli {

/// Entry point of the `csearch` tool. Returns the process exit code: 0 on
/// success, 1 on a runtime failure, 2 on a usage or validation error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace csearch::cli
