#pragma once

#include <iosfwd>

namespace spectree::cli {

/// Parses arguments and dispatches to a subcommand. Returns the process exit
/// code: 0 success, 1 failed check, 2 usage or config error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spectree::cli
