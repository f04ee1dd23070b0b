// One line per acceptance criterion; exit status is the failure count.
#include <iostream>

#include "CLI11.hpp"
#include "acceptance.hpp"

int main(int argc, char** argv) {
  CLI::App app{"wml acceptance suite"};
  std::vector<int> ids;
  bool verbose = false;
  app.add_option("-c,--criterion", ids, "criteria to run (default: all)")->check(CLI::Range(1, 6));
  app.add_flag("-v,--verbose", verbose, "progress on stderr");
  CLI11_PARSE(app, argc, argv);
  return wml::acceptance::run_suite(ids, verbose) == 0 ? 0 : 1;
}
