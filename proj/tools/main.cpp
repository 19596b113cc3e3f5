#include <iostream>

#include "spectree_cli/app.hpp"

int main(int argc, char** argv) { return spectree::cli::run_cli(argc, argv, std::cout, std::cerr); }
