#include <string>
#include <vector>

#include "quadlearn/experiments.hpp"

int main(int argc, char** argv) {
  return quadlearn::cli_main(std::vector<std::string>(argv + 1, argv + argc));
}
