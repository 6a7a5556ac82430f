#pragma once

#include <iosfwd>

namespace rc::cli {

/// Exit codes: 0 success, 1 usage error, 2 runtime error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rc::cli
