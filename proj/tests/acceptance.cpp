#include <algorithm>
#include <iostream>

#include "nodalmc/acceptance.hpp"

int main(int argc, char** argv) {
  nodalmc::acceptance::Options opt;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "-v") opt.log = &std::cerr;
    else opt.only.insert(std::stoi(a));
  }
  const auto results = nodalmc::acceptance::run_acceptance(opt, std::cout);
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; });
  std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " criteria passed\n";
  return failed ? 1 : 0;
}
