#include <string>
#include <vector>

#include "rvcguard/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rvcguard::run_cli(args);
}
