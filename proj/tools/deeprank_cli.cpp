#include <iostream>

#include "deeprank/cli.hpp"

int main(int argc, char** argv) {
  return deeprank::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
