#include <iostream>

#include "tfpdet/cli.hpp"

int main(int argc, char** argv) { return tfpdet::cli::run(argc, argv, std::cout, std::cerr); }
