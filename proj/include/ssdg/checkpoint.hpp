#pragma once

#include <string>
#include <vector>

#include "ssdg/tensor.hpp"

namespace ssdg {

// Parameter checkpoint: a structured-text header naming every parameter and
// its shape, followed by the raw little-endian float32 payload in header
// order. Round trips are bit-exact.
struct CheckpointEntry {
  std::string name;  // no whitespace
  std::vector<int> shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::string arch;  // architecture tag recorded alongside the parameters
  std::vector<CheckpointEntry> entries;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ssdg
