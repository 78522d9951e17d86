#pragma once

namespace rsdcm {

// Entry point for the command-line tool. Returns the process exit code:
// 0 success, 2 configuration/usage error, 3 numerical failure, 4 I/O error.
int run_cli(int argc, const char* const* argv);

}  // namespace rsdcm
