#include <iostream>

#include "latentfit/cli.hpp"

int main(int argc, char** argv) { return latentfit::cli::dispatch(argc, argv, std::cout, std::cerr); }
