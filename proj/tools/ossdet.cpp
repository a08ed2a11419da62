#include <iostream>

#include "ossdet/app/commands.hpp"

int main(int argc, char** argv) { return ossdet::app::run_cli(argc, argv, std::cout, std::cerr); }
