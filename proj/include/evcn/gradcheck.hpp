#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace evcn {

struct GradCheckResult {
  std::string name;
  double max_err = 0;  // max relative error over all points and coordinates
};

// Finite-difference verification of every loss term's analytic gradient at
// `points` random valid points each. Valid means away from clamp boundaries
// and |y - gamma| kinks, where the losses are smooth.
std::vector<GradCheckResult> run_gradient_suite(int points, uint64_t seed);

}  // namespace evcn
