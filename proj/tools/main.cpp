#include <iostream>

#include "ctk/cli.hpp"

int main(int argc, char** argv) { return ctk::dispatch(argc, argv, std::cout, std::cerr); }
