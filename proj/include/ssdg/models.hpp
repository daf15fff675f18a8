#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ssdg/benchmark.hpp"
#include "ssdg/ops.hpp"
#include "ssdg/rng.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

// Desk-scale conv trunk: 3x3 convs (second one stride 2), ReLU, a style
// confusor insertion point after every block, global average pool.
struct ArchConfig {
  int in_channels = 3;
  std::vector<int> widths = {8, 16, 16};
  int classes = kGlyphClasses;
};

struct StyleConfusorConfig {
  double beta_concentration = 0.1;  // Beta parameter for the mixing weight
  double epsilon = 1e-6;
  bool active = true;
};

std::string arch_to_string(const ArchConfig& arch);
ArchConfig arch_from_string(const std::string& s);

// Renormalizes features to a convex combination of per-sample channel
// statistics: with (mu, sigma) the spatial stats and (mu~, sigma~) their
// batch permutation, beta = lambda*mu + (1-lambda)*mu~, gamma likewise, and
// the result is gamma * (f - mu) / (sigma + eps) + beta. Statistics are
// detached; the gradient sees a per-(sample,channel) affine map.
template <typename T>
TensorT<T> style_confusor_apply(const TensorT<T>& f, const std::vector<int>& perm,
                                const std::vector<T>& lambdas, double epsilon) {
  const int n = f.dim(0), c = f.dim(1);
  if (static_cast<int>(perm.size()) != n || static_cast<int>(lambdas.size()) != n)
    throw std::invalid_argument("style_confusor: permutation/lambda size mismatch with batch");
  auto [mu, sigma] = ops::channel_stats(f);
  const auto mu_d = mu.data();
  const auto sg_d = sigma.data();
  std::vector<T> scl(static_cast<size_t>(n) * c), shift(static_cast<size_t>(n) * c);
  const T eps = static_cast<T>(epsilon);
  for (int i = 0; i < n; ++i) {
    const T lam = lambdas[static_cast<size_t>(i)];
    const int pi = perm[static_cast<size_t>(i)];
    for (int j = 0; j < c; ++j) {
      const size_t idx = static_cast<size_t>(i) * c + j;
      const size_t pidx = static_cast<size_t>(pi) * c + j;
      const T beta = lam * mu_d[idx] + (T(1) - lam) * mu_d[pidx];
      const T gamma = lam * sg_d[idx] + (T(1) - lam) * sg_d[pidx];
      const T s = gamma / (sg_d[idx] + eps);
      scl[idx] = s;
      shift[idx] = beta - mu_d[idx] * s;
    }
  }
  return ops::channel_affine(f, std::move(scl), std::move(shift));
}

// Training-mode entry: one shared batch permutation, one lambda per sample
// from Beta(conc, conc). Identity when not training or inactive.
template <typename T>
TensorT<T> style_confusor(const TensorT<T>& f, const StyleConfusorConfig& cfg, Rng& rng,
                          bool training) {
  if (!training || !cfg.active) return f;
  const int n = f.dim(0);
  std::vector<int> perm(static_cast<size_t>(n));
  rng.permutation(perm.data(), perm.size());
  std::vector<T> lambdas(static_cast<size_t>(n));
  for (auto& l : lambdas) l = static_cast<T>(rng.beta(cfg.beta_concentration));
  return style_confusor_apply(f, perm, lambdas, cfg.epsilon);
}

template <typename T>
struct ConvLayerT {
  TensorT<T> w, b;
  int stride = 1;
  int padding = 1;
};

template <typename T>
class ConvStackT {
 public:
  ConvStackT() = default;

  ConvStackT(const ArchConfig& arch, uint64_t init_seed) : arch_(arch) {
    if (arch.widths.empty() || arch.in_channels < 1 || arch.classes < 2)
      throw ConfigError("arch: need at least one conv width, >=1 input channel, >=2 classes");
    for (const int w : arch.widths)
      if (w < 1) throw ConfigError("arch: conv widths must be positive");
    int cin = arch.in_channels;
    for (size_t li = 0; li < arch.widths.size(); ++li) {
      const int cout = arch.widths[li];
      ConvLayerT<T> layer;
      layer.stride = li == 1 ? 2 : 1;
      layer.padding = 1;
      Rng rng(derive_seed(init_seed, "conv", li));
      const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * 9);
      std::vector<T> w(static_cast<size_t>(cout) * cin * 9);
      for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
      std::vector<T> b(static_cast<size_t>(cout));
      for (auto& v : b) v = static_cast<T>(rng.uniform(-bound, bound));
      layer.w = TensorT<T>::from_data({cout, cin, 3, 3}, std::move(w), true);
      layer.b = TensorT<T>::from_data({cout}, std::move(b), true);
      layers_.push_back(std::move(layer));
      cin = cout;
    }
  }

  // Features after global average pooling: [n, feature_dim]. The confusor
  // (when given and active) runs after every block's ReLU.
  TensorT<T> features(const TensorT<T>& images, bool training,
                      const StyleConfusorConfig* confusor, Rng* rng) const {
    TensorT<T> x = images;
    for (const auto& layer : layers_) {
      x = ops::relu(ops::add_channel_bias(ops::conv2d(x, layer.w, layer.stride, layer.padding),
                                          layer.b));
      if (confusor && rng) x = style_confusor(x, *confusor, *rng, training);
    }
    return ops::global_avg_pool(x);
  }

  int feature_dim() const { return arch_.widths.back(); }
  const ArchConfig& arch() const { return arch_; }

  std::vector<TensorT<T>> params() const {
    std::vector<TensorT<T>> out;
    for (const auto& l : layers_) {
      out.push_back(l.w);
      out.push_back(l.b);
    }
    return out;
  }

  void collect_named(const std::string& prefix,
                     std::vector<std::pair<std::string, TensorT<T>>>& out) const {
    for (size_t i = 0; i < layers_.size(); ++i) {
      out.emplace_back(prefix + "conv" + std::to_string(i) + ".w", layers_[i].w);
      out.emplace_back(prefix + "conv" + std::to_string(i) + ".b", layers_[i].b);
    }
  }

 private:
  ArchConfig arch_;
  std::vector<ConvLayerT<T>> layers_;
};

namespace detail {

template <typename T>
std::pair<TensorT<T>, TensorT<T>> make_linear_head(int in_dim, int classes, uint64_t seed) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  std::vector<T> w(static_cast<size_t>(in_dim) * classes);
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  std::vector<T> b(static_cast<size_t>(classes));
  for (auto& v : b) v = static_cast<T>(rng.uniform(-bound, bound));
  return {TensorT<T>::from_data({in_dim, classes}, std::move(w), true),
          TensorT<T>::from_data({classes}, std::move(b), true)};
}

}  // namespace detail

// One DCG peer: conv trunk with confusor insertion points plus a linear
// classifier head.
template <typename T>
class SubnetworkT {
 public:
  SubnetworkT() = default;

  SubnetworkT(const ArchConfig& arch, const StyleConfusorConfig& confusor, uint64_t init_seed)
      : stack_(arch, derive_seed(init_seed, "stack")), confusor_(confusor) {
    std::tie(fc_w_, fc_b_) = detail::make_linear_head<T>(stack_.feature_dim(), arch.classes,
                                                         derive_seed(init_seed, "head"));
  }

  TensorT<T> logits(const TensorT<T>& images, bool training, Rng* confusor_rng) const {
    TensorT<T> f = stack_.features(images, training, &confusor_, confusor_rng);
    return ops::add_rowvec(ops::matmul(f, fc_w_), fc_b_);
  }

  // Inference-mode class probabilities (confusor omitted).
  TensorT<T> predict(const TensorT<T>& images) const {
    autograd::NoGradGuard no_grad;
    return ops::softmax_rows(logits(images, false, nullptr));
  }

  std::vector<TensorT<T>> params() const {
    auto out = stack_.params();
    out.push_back(fc_w_);
    out.push_back(fc_b_);
    return out;
  }

  std::vector<std::pair<std::string, TensorT<T>>> named_params() const {
    std::vector<std::pair<std::string, TensorT<T>>> out;
    stack_.collect_named("", out);
    out.emplace_back("fc.w", fc_w_);
    out.emplace_back("fc.b", fc_b_);
    return out;
  }

  const ArchConfig& arch() const { return stack_.arch(); }
  const StyleConfusorConfig& confusor_config() const { return confusor_; }

 private:
  ConvStackT<T> stack_;
  TensorT<T> fc_w_, fc_b_;
  StyleConfusorConfig confusor_;
};

// APL's model: shared extractor with two classifier heads, initialized
// differently so their disagreement is informative from the start. No style
// confusor here.
template <typename T>
class McdModelT {
 public:
  McdModelT() = default;

  McdModelT(const ArchConfig& arch, uint64_t init_seed)
      : stack_(arch, derive_seed(init_seed, "stack")) {
    std::tie(w1_, b1_) = detail::make_linear_head<T>(stack_.feature_dim(), arch.classes,
                                                     derive_seed(init_seed, "head1"));
    std::tie(w2_, b2_) = detail::make_linear_head<T>(stack_.feature_dim(), arch.classes,
                                                     derive_seed(init_seed, "head2"));
  }

  TensorT<T> features(const TensorT<T>& images) const {
    return stack_.features(images, false, nullptr, nullptr);
  }

  TensorT<T> head_logits(int head, const TensorT<T>& feats) const {
    if (head == 0) return ops::add_rowvec(ops::matmul(feats, w1_), b1_);
    if (head == 1) return ops::add_rowvec(ops::matmul(feats, w2_), b2_);
    throw std::invalid_argument("head_logits: head must be 0 or 1");
  }

  // Averaged two-head softmax, inference mode.
  TensorT<T> predict(const TensorT<T>& images) const {
    autograd::NoGradGuard no_grad;
    TensorT<T> f = features(images);
    TensorT<T> p1 = ops::softmax_rows(head_logits(0, f));
    TensorT<T> p2 = ops::softmax_rows(head_logits(1, f));
    return ops::scale(ops::add(p1, p2), T(0.5));
  }

  std::vector<TensorT<T>> extractor_params() const { return stack_.params(); }
  std::vector<TensorT<T>> head_params() const { return {w1_, b1_, w2_, b2_}; }
  const ArchConfig& arch() const { return stack_.arch(); }

 private:
  ConvStackT<T> stack_;
  TensorT<T> w1_, b1_, w2_, b2_;
};

using Subnetwork = SubnetworkT<float>;
using McdModel = McdModelT<float>;

void save_subnetwork(const std::string& path, const Subnetwork& net);
Subnetwork load_subnetwork(const std::string& path, const StyleConfusorConfig& confusor);

}  // namespace ssdg
