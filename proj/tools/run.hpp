#pragma once

#include <iosfwd>

namespace bilevel::cli {

enum Exit { kOk = 0, kUsage = 1, kNotApplicable = 2, kInconclusive = 3, kInternal = 4 };

// Full command-line entry point. Artifacts go to `out` unless --out names a
// file; diagnostics are one line on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bilevel::cli
