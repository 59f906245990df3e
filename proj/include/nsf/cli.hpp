#pragma once

namespace nsf {

// Entry point behind the `nsf` binary. Exit codes: 0 success, 1 usage error,
// 2 runtime error.
int cli_run(int argc, const char* const* argv);

}  // namespace nsf
