#pragma once

#include <iosfwd>

namespace ctk {

/// Runs one subcommand. Results go to `out`, diagnostics to `err`.
/// Returns 0 on success, 1 on a domain error and 2 on a usage error.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctk
