#include <iostream>

#include "shallom/cli.hpp"

int main(int argc, char** argv) { return shallom::cli::run(argc, argv, std::cout, std::cerr); }
