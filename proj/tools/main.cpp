#include <vector>

#include "uzlm/cli.hpp"

int main(int argc, char** argv) {
  return uzlm::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
