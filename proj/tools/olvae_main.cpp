#include <vector>

#include "olvae/cli.hpp"

int main(int argc, char** argv) {
  return olvae::run(std::vector<std::string>(argv + 1, argv + argc));
}
