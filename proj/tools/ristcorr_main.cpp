#include "ristcorr/cli.hpp"

int main(int argc, char** argv) {
  return ristcorr::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
