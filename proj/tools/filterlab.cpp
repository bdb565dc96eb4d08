#include <iostream>

#include "filterlab/harness/cli.hpp"

int main(int argc, char** argv) { return filterlab::cli_main(argc, argv, std::cout, std::cerr); }
