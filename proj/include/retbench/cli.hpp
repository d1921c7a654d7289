#pragma once

#include <ostream>

namespace retbench {

/// Entry point of the `retbench` executable; returns the process exit code
/// (0 ok, 1 usage, 2 data, 3 transport, 4 internal).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace retbench
