#include <cstdio>

#include "polyest/acceptance.hpp"

int main() {
  polyest::AcceptanceOptions options;
  options.on_result = [](const polyest::CriterionResult& r) {
    std::printf("%s\n", r.Line().c_str());
    std::fflush(stdout);
  };
  int failed = 0;
  for (const auto& r : polyest::RunAcceptance(options)) failed += !r.passed;
  std::printf("%s: %d criteria failed\n", failed ? "FAIL" : "PASS", failed);
  return failed ? 1 : 0;
}
