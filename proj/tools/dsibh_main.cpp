#include <iostream>

#include "dsibh/cli.hpp"

int main(int argc, char** argv) { return dsibh::cli::run(argc, argv, std::cout, std::cerr); }
