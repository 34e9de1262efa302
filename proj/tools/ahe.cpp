#include <iostream>

#include "ahe/cli.hpp"

int main(int argc, char** argv) { return ahe::run_command(argc, argv, std::cout, std::cerr); }
