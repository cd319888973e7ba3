#pragma once

#include <iosfwd>

namespace bldg::cli {

// Parses arguments and runs one subcommand. Failures print a single line
// "error: <kind>: <message>" to `err` and return nonzero (2 for usage
// errors, 1 otherwise).
int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

}  // namespace bldg::cli
