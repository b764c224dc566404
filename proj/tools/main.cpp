#include <string>
#include <vector>

#include "cli.hpp"

int main(int argc, char** argv) {
  return ntil::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
