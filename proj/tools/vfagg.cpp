#include <iostream>

#include "vfagg/cli.hpp"

int main(int argc, char** argv) { return vfagg::run_cli(argc, argv, std::cout, std::cerr); }
