#pragma once

#include <stdexcept>
#include <vector>

#include "ssdg/tensor.hpp"

namespace ssdg {

// Plain SGD with momentum and L2 weight decay:
//   v <- momentum*v + (grad + weight_decay*p),  p <- p - lr*v
// With momentum 0 and decay 0 this is exactly p <- p - lr*grad, and a step
// with lr = 0 leaves parameters bit-identical.
template <typename T>
class SgdOptimizerT {
 public:
  SgdOptimizerT(std::vector<TensorT<T>> params, double learning_rate, double momentum = 0.0,
                double weight_decay = 0.0)
      : params_(std::move(params)),
        lr_(learning_rate),
        momentum_(momentum),
        weight_decay_(weight_decay) {
    if (lr_ < 0) throw std::invalid_argument("sgd: negative learning rate");
    if (momentum_ < 0 || momentum_ >= 1) throw std::invalid_argument("sgd: momentum not in [0,1)");
    if (weight_decay_ < 0) throw std::invalid_argument("sgd: negative weight decay");
    velocity_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i)
      velocity_[i].assign(params_[i].numel(), T(0));
  }

  void set_learning_rate(double lr) {
    if (lr < 0) throw std::invalid_argument("sgd: negative learning rate");
    lr_ = lr;
  }
  double learning_rate() const { return lr_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() { step_range(0, params_.size()); }

  // Step only params [first, last); used by the adversarial schedule where
  // one step updates heads only and another the extractor only.
  void step_range(size_t first, size_t last) {
    const T lr = static_cast<T>(lr_);
    const T mom = static_cast<T>(momentum_);
    const T wd = static_cast<T>(weight_decay_);
    for (size_t i = first; i < last; ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) continue;
      auto pd = p.data();
      auto pg = p.grad();
      auto& vel = velocity_[i];
      if (lr == T(0)) continue;
      for (size_t j = 0; j < pd.size(); ++j) {
        T g = pg[j] + wd * pd[j];
        if (mom != T(0)) {
          vel[j] = mom * vel[j] + g;
          g = vel[j];
        }
        pd[j] -= lr * g;
      }
    }
  }

  const std::vector<TensorT<T>>& params() const { return params_; }

 private:
  std::vector<TensorT<T>> params_;
  std::vector<std::vector<T>> velocity_;
  double lr_;
  double momentum_;
  double weight_decay_;
};

using SgdOptimizer = SgdOptimizerT<float>;

}  // namespace ssdg
