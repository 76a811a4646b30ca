#include <vector>
#include <string>

#include "propsel/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return propsel::cli::run(std::move(args));
}
