#include <iostream>

#include "mfff/cli.hpp"

int main(int argc, char** argv) { return mfff::cli::run(argc, argv, std::cout, std::cerr); }
