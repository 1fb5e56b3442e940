#include <adaptest/cli.hpp>

#include <iostream>

int main(int argc, char** argv) { return adaptest::cli::run(argc, argv, std::cout, std::cerr); }
