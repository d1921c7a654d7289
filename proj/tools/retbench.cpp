#include <iostream>

#include "retbench/cli.hpp"

int main(int argc, char** argv) { return retbench::run_cli(argc, argv, std::cout, std::cerr); }
