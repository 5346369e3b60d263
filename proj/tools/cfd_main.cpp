#include <iostream>
#include <string>
#include <vector>

#include "cfd/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cfd::cli::run(args, std::cin, std::cout, std::cerr);
}
