#pragma once

#include <iosfwd>

namespace rmra::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericError = 3 };

/// Entry point behind the `rmra` executable. Subcommands: generate, train,
/// eval, infer, info. Diagnostics go to `err`, results to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rmra::cli
