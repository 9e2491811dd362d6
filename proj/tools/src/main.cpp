#include <iostream>
#include <string>
#include <vector>

#include "ibpt_cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return ibpt::cli::run(args, std::cout, std::cerr);
}
