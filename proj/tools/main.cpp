#include "cli/commands.hpp"

int main(int argc, char** argv) { return infodesign::cli::run(argc, argv); }
