#include <iostream>

#include "hanam/cli.hpp"

int main(int argc, char** argv) { return hanam::cli::run(argc, argv, std::cout, std::cerr); }
