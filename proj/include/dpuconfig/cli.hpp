#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dpuconfig {

/// Runs the command line tool. args excludes the program name. Returns the
/// process exit status; diagnostics go to err, results to out.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dpuconfig
