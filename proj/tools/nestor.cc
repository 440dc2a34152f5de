#include <iostream>
#include <string>
#include <vector>

#include "nestor/cli/commands.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return nestor::cli::run(args, std::cout, std::cerr);
}
