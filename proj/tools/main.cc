#include <iostream>
#include <string>
#include <vector>

#include "activead/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return activead::cli::run_cli(args, std::cout, std::cerr);
}
