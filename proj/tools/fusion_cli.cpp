#include <iostream>

#include "fusion/cli.hpp"

int main(int argc, char** argv) { return fusion::run_command(argc, argv, std::cerr); }
