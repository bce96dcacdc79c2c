#include <iostream>

#include "cdmt/cli/commands.hpp"

int main(int argc, char** argv) { return cdmt::cli::run_cli(argc, argv, std::cout, std::cerr); }
