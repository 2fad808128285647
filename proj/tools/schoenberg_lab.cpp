#include <iostream>

#include "schoenberg/cli.hpp"

int main(int argc, char** argv) {
  return schoenberg::cli::run(argc, argv, std::cout, std::cerr);
}
