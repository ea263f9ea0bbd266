#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return csearch::cli::run_cli(argc, argv, std::cout, std::cerr); }
