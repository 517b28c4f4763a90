#include <iostream>
#include <string>
#include <vector>

#include "confnet2seq/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return confnet2seq::cli::run(args, std::cout, std::cerr);
}
