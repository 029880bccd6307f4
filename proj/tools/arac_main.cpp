#include <iostream>

#include "arac/cli.hpp"

int main(int argc, char** argv) { return arac::cli::run_cli(argc, argv, std::cout); }
