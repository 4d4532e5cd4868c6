#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "parityd/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  parityd::cli::Io io{std::cout, std::cerr, std::cin};
  io.color = ::isatty(STDERR_FILENO) && std::getenv("NO_COLOR") == nullptr;
  return parityd::cli::run(std::move(args), io);
}
