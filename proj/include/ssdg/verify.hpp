#pragma once

#include <string>
#include <vector>

namespace ssdg {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0;
  int instances = 0;
};

// Runs central-difference gradient checks in 64-bit mode over every
// differentiable operation, the composed losses, and a full subnetwork
// forward-plus-loss, instances_per_op random instances each.
std::vector<GradCheckResult> gradient_suite(int instances_per_op, uint64_t seed);

}  // namespace ssdg
