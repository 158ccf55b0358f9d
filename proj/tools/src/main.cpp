#include <iostream>
#include <string>
#include <vector>

#include "splicemix/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return splicemix::cli::run(args, std::cout, std::cerr);
}
