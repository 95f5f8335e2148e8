#include <iostream>
#include <string>
#include <vector>

#include "selfsim/cli_io.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  selfsim::RunConfig config;
  try {
    config = selfsim::parse_args(args);
  } catch (const selfsim::HelpRequested& help) {
    std::cout << help.what();
    return 0;
  } catch (const selfsim::UsageError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  }
  return selfsim::run(config, std::cout, std::cerr);
}
