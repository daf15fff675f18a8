#pragma once

#include <cstdint>
#include <vector>

#include "ssdg/rng.hpp"

namespace ssdg {

// Cyclic cursor over [0, n) that reshuffles on every wrap. The shuffle for
// wrap w is a pure function of (seed, w), so consumers stay deterministic
// no matter how batch sizes divide n.
class BatchCursor {
 public:
  BatchCursor(size_t n, uint64_t seed) : n_(n), seed_(seed) { reshuffle(); }

  std::vector<int> next(int batch) {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(batch));
    for (int i = 0; i < batch; ++i) {
      if (pos_ == n_) {
        ++wrap_;
        reshuffle();
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    Rng rng(derive_seed(seed_, "wrap", wrap_));
    rng.permutation(order_.data(), n_);
    pos_ = 0;
  }

  size_t n_;
  uint64_t seed_;
  size_t pos_ = 0;
  uint64_t wrap_ = 0;
  std::vector<int> order_;
};

}  // namespace ssdg
