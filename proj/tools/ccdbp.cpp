#include <iostream>

#include "ccdbp/cli.hpp"

int main(int argc, char** argv) { return ccdbp::run_cli(argc, argv, std::cout, std::cerr); }
