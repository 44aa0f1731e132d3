#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace spikegrid {

// Command-line front end. Returns the process exit code: 0 on success, 1 on
// runtime failures, 2 on configuration and usage errors. `args` excludes the
// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace spikegrid
