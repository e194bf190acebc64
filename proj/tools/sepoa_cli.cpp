#include <iostream>

#include "sepoa/harness.hpp"

int main(int argc, char** argv) { return sepoa::cli(argc, argv, std::cout, std::cerr); }
