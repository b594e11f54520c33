#include <iostream>

#include "rmra/cli.hpp"

int main(int argc, char** argv) { return rmra::cli::run(argc, argv, std::cout, std::cerr); }
