#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cyclesense::cli {

/// Runs one subcommand. Returns 0 on success, 1 on invalid input or
/// configuration (with usage text on `err`), 2 on runtime failure.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cyclesense::cli
