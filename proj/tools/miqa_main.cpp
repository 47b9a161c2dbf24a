#include <string>
#include <vector>

#include "miqa/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return miqa::run(args);
}
