#pragma once

#include <iosfwd>

namespace csal::cli {

inline constexpr const char* kVersion = "1.0.0";

/// Entry point of the `csal` binary. Returns 0 on success, 1 on a usage
/// error and 2 on a runtime failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace csal::cli
