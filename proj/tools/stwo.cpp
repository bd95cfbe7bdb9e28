#include <iostream>

#include "stwo/cli.hpp"

int main(int argc, char** argv) { return stwo::run_cli(argc, argv, std::cout, std::cerr); }
