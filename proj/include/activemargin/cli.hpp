#pragma once

#include <iosfwd>

namespace activemargin {

/// Entry point of the `activemargin` tool. Returns the process exit code;
/// diagnostics go to `err`, results to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace activemargin
