#include <string>
#include <vector>

#include "floodcpf/cli.hpp"

int main(int argc, char** argv) {
  return floodcpf::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
