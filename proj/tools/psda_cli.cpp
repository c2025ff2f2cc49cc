#include <iostream>

#include "psda/cli.hpp"

int main(int argc, char** argv) { return psda::cli::run(argc, argv, std::cout, std::cerr); }
