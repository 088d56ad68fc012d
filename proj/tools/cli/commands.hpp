#pragma once

#include <string>
#include <vector>

namespace infodesign::cli {

/// Runs one subcommand; `args` excludes the program name. Returns the exit code.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace infodesign::cli
