// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.
#include <iostream>

#include "acceptance/criteria.hpp"

int main() {
  const int failures = focalvox::acceptance::run_all(std::cout);
  std::cout << failures << " of " << focalvox::acceptance::all_criteria().size() << " criteria failed\n";
  return failures == 0 ? 0 : 1;
}
