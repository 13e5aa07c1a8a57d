#include <iostream>

#include "cfdrive/cli.hpp"

int main(int argc, char** argv) { return cfdrive::run_cli(argc, argv, std::cout, std::cerr); }
