#include <iostream>

#include "locsens/cli.hpp"

int main(int argc, char** argv) { return locsens::cli::run_cli(argc, argv, std::cout, std::cerr); }
