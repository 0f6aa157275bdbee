#pragma once

#include <iosfwd>

namespace mtmask::cli {

/// Runs one command line. Reports go to `out`; failures print a single JSON
/// line {"error": kind, "exit": code, "message": ...} to `err`.
/// Exit codes: 0 ok, 2 usage, 3 data, 4 numeric.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace mtmask::cli
