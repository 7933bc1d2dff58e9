#include "ambi/interface.hpp"

#include <iostream>

int main(int argc, char** argv) { return ambi::cli_main(argc, argv, std::cout, std::cerr, std::cin); }
