#include <iostream>
#include <string>
#include <vector>

#include "piece/app/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return piece::app::run(args, std::cout, std::cerr);
}
