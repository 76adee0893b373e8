#include <iostream>

#include "vampnet/cli.hpp"

int main(int argc, char** argv) { return vampnet::run_cli(argc, argv, std::cout, std::cerr); }
