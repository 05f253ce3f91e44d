#pragma once

#include <string>
#include <vector>

namespace vsrhe {

struct SelftestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Small oracle and property checks over every module; runs in a few seconds.
std::vector<SelftestResult> run_selftest();

}  // namespace vsrhe
