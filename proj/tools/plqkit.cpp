#include <string>
#include <vector>

#include "plqkit/cli.hpp"

int main(int argc, char** argv) {
  return plqkit::run_command(std::vector<std::string>(argv + 1, argv + argc));
}
