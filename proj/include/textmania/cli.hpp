#pragma once

#include <string>
#include <vector>

namespace textmania {

// Top-level command dispatcher; argv[0] is the program name. Returns the
// process exit code: 0 on success, 1 for runtime failures (a machine-readable
// {"error": {"type", "message"}} record goes to stderr), 2 for usage errors
// and unknown subcommands.
int cli_dispatch(int argc, const char* const* argv);

// Convenience overload for tests; args exclude the program name.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace textmania
