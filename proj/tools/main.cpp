#include <iostream>

#include "tdcosim/cli.hpp"

int main(int argc, char** argv) { return tdcosim::cli::run_cli(argc, argv, std::cout, std::cerr); }
