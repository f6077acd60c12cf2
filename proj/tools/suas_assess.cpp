#include <iostream>
#include <string>
#include <vector>

#include "suas/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return suas::cli::RunCli(args, std::cout, std::cerr);
}
