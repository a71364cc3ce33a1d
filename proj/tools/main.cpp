#include <iostream>

#include "lightnorm/cli.hpp"

int main(int argc, char** argv) { return lightnorm::run_cli(argc, argv, std::cout, std::cerr); }
