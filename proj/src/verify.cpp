#include "ssdg/verify.hpp"

#include <functional>

#include "ssdg/apl.hpp"
#include "ssdg/dcg.hpp"
#include "ssdg/grad_check.hpp"
#include "ssdg/models.hpp"
#include "ssdg/ops.hpp"
#include "ssdg/rng.hpp"

namespace ssdg {

namespace {

using DTensor = TensorT<double>;

DTensor random_tensor(Rng& rng, std::vector<int> shape, double lo, double hi,
                      bool requires_grad = true) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(lo, hi);
  return DTensor::from_data(std::move(shape), std::move(data), requires_grad);
}

// Fixed random projection to a scalar; catches permuted/rescaled gradients
// that a plain sum would miss.
DTensor project(const DTensor& x, const DTensor& weights) {
  return ops::sum_all(ops::mul(x, weights));
}

DTensor weights_like(Rng& rng, const DTensor& x) {
  return random_tensor(rng, x.shape(), -1.0, 1.0, false);
}

// Away from zero, for kinked ops (relu, abs).
DTensor random_tensor_off_zero(Rng& rng, std::vector<int> shape) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) {
    const double mag = rng.uniform(0.15, 1.5);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return DTensor::from_data(std::move(shape), std::move(data), true);
}

std::vector<int> random_labels(Rng& rng, int n, int k) {
  std::vector<int> labels(static_cast<size_t>(n));
  for (auto& l : labels) l = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(k)));
  return labels;
}

struct Check {
  std::string name;
  std::function<double(Rng&)> run;  // one random instance -> max rel err
};

std::vector<Check> build_checks() {
  std::vector<Check> checks;

  checks.push_back({"add", [](Rng& rng) {
    const int n = 2 + static_cast<int>(rng.uniform_index(4));
    DTensor a = random_tensor(rng, {n, 3}, -2, 2);
    DTensor b = random_tensor(rng, {n, 3}, -2, 2);
    DTensor w = weights_like(rng, a);
    return grad_check([&] { return project(ops::add(a, b), w); }, {a, b});
  }});

  checks.push_back({"sub", [](Rng& rng) {
    const int n = 2 + static_cast<int>(rng.uniform_index(4));
    DTensor a = random_tensor(rng, {n, 2, 2}, -2, 2);
    DTensor b = random_tensor(rng, {n, 2, 2}, -2, 2);
    DTensor w = weights_like(rng, a);
    return grad_check([&] { return project(ops::sub(a, b), w); }, {a, b});
  }});

  checks.push_back({"mul", [](Rng& rng) {
    const int n = 2 + static_cast<int>(rng.uniform_index(4));
    DTensor a = random_tensor(rng, {n, 3}, -2, 2);
    DTensor b = random_tensor(rng, {n, 3}, -2, 2);
    DTensor w = weights_like(rng, a);
    return grad_check([&] { return project(ops::mul(a, b), w); }, {a, b});
  }});

  checks.push_back({"scale", [](Rng& rng) {
    DTensor a = random_tensor(rng, {3, 4}, -2, 2);
    DTensor w = weights_like(rng, a);
    const double c = rng.uniform(-2, 2);
    return grad_check([&] { return project(ops::scale(a, c), w); }, {a});
  }});

  checks.push_back({"abs", [](Rng& rng) {
    DTensor a = random_tensor_off_zero(rng, {4, 3});
    DTensor w = weights_like(rng, a);
    return grad_check([&] { return project(ops::abs(a), w); }, {a});
  }});

  checks.push_back({"relu", [](Rng& rng) {
    DTensor a = random_tensor_off_zero(rng, {2, 3, 4});
    DTensor w = weights_like(rng, a);
    return grad_check([&] { return project(ops::relu(a), w); }, {a});
  }});

  checks.push_back({"matmul", [](Rng& rng) {
    const int m = 1 + static_cast<int>(rng.uniform_index(5));
    const int k = 1 + static_cast<int>(rng.uniform_index(5));
    const int n = 1 + static_cast<int>(rng.uniform_index(5));
    DTensor a = random_tensor(rng, {m, k}, -1.5, 1.5);
    DTensor b = random_tensor(rng, {k, n}, -1.5, 1.5);
    DTensor w = DTensor::from_data({m, n}, [&] {
      std::vector<double> d(static_cast<size_t>(m) * n);
      for (auto& v : d) v = rng.uniform(-1, 1);
      return d;
    }());
    return grad_check([&] { return project(ops::matmul(a, b), w); }, {a, b});
  }});

  checks.push_back({"add_rowvec", [](Rng& rng) {
    const int n = 2 + static_cast<int>(rng.uniform_index(4));
    DTensor x = random_tensor(rng, {n, 4}, -2, 2);
    DTensor b = random_tensor(rng, {4}, -2, 2);
    DTensor w = weights_like(rng, x);
    return grad_check([&] { return project(ops::add_rowvec(x, b), w); }, {x, b});
  }});

  checks.push_back({"add_channel_bias", [](Rng& rng) {
    DTensor x = random_tensor(rng, {2, 3, 3, 3}, -2, 2);
    DTensor b = random_tensor(rng, {3}, -2, 2);
    DTensor w = weights_like(rng, x);
    return grad_check([&] { return project(ops::add_channel_bias(x, b), w); }, {x, b});
  }});

  checks.push_back({"conv2d", [](Rng& rng) {
    const int stride = 1 + static_cast<int>(rng.uniform_index(2));
    const int pad = static_cast<int>(rng.uniform_index(2));
    const int h = 4 + static_cast<int>(rng.uniform_index(3));
    DTensor x = random_tensor(rng, {2, 2, h, h}, -1, 1);
    DTensor k = random_tensor(rng, {3, 2, 3, 3}, -1, 1);
    const int ho = (h + 2 * pad - 3) / stride + 1;
    DTensor w = DTensor::from_data({2, 3, ho, ho}, [&] {
      std::vector<double> d(static_cast<size_t>(2 * 3) * ho * ho);
      for (auto& v : d) v = rng.uniform(-1, 1);
      return d;
    }());
    return grad_check([&] { return project(ops::conv2d(x, k, stride, pad), w); }, {x, k});
  }});

  checks.push_back({"global_avg_pool", [](Rng& rng) {
    DTensor x = random_tensor(rng, {2, 3, 4, 4}, -2, 2);
    DTensor w = DTensor::from_data({2, 3}, {0.3, -1.2, 0.7, 1.1, -0.4, 0.9});
    return grad_check([&] { return project(ops::global_avg_pool(x), w); }, {x});
  }});

  checks.push_back({"softmax_rows", [](Rng& rng) {
    const int n = 2 + static_cast<int>(rng.uniform_index(4));
    DTensor z = random_tensor(rng, {n, 5}, -3, 3);
    DTensor w = weights_like(rng, z);
    return grad_check([&] { return project(ops::softmax_rows(z), w); }, {z});
  }});

  checks.push_back({"xlogx", [](Rng& rng) {
    DTensor x = random_tensor(rng, {3, 4}, 0.05, 1.2);
    DTensor w = weights_like(rng, x);
    return grad_check([&] { return project(ops::xlogx(x), w); }, {x});
  }});

  checks.push_back({"sum_all", [](Rng& rng) {
    DTensor x = random_tensor(rng, {2, 3, 2}, -2, 2);
    return grad_check([&] { return ops::sum_all(x); }, {x});
  }});

  checks.push_back({"mean_all", [](Rng& rng) {
    DTensor x = random_tensor(rng, {4, 3}, -2, 2);
    return grad_check([&] { return ops::mean_all(x); }, {x});
  }});

  checks.push_back({"mean_rows", [](Rng& rng) {
    const int n = 2 + static_cast<int>(rng.uniform_index(5));
    DTensor x = random_tensor(rng, {n, 4}, -2, 2);
    DTensor w = DTensor::from_data({4}, {0.5, -1.0, 2.0, 0.25});
    return grad_check([&] { return project(ops::mean_rows(x), w); }, {x});
  }});

  checks.push_back({"index_select0", [](Rng& rng) {
    DTensor x = random_tensor(rng, {5, 3}, -2, 2);
    std::vector<int> idx = {4, 0, 2, 2};  // repeats exercise scatter-add
    DTensor w = DTensor::from_data({4, 3}, [&] {
      std::vector<double> d(12);
      for (auto& v : d) v = rng.uniform(-1, 1);
      return d;
    }());
    return grad_check([&] { return project(ops::index_select0(x, idx), w); }, {x});
  }});

  checks.push_back({"concat0", [](Rng& rng) {
    DTensor a = random_tensor(rng, {2, 3}, -2, 2);
    DTensor b = random_tensor(rng, {3, 3}, -2, 2);
    DTensor w = DTensor::from_data({5, 3}, [&] {
      std::vector<double> d(15);
      for (auto& v : d) v = rng.uniform(-1, 1);
      return d;
    }());
    return grad_check([&] { return project(ops::concat0(a, b), w); }, {a, b});
  }});

  checks.push_back({"channel_affine", [](Rng& rng) {
    DTensor x = random_tensor(rng, {2, 3, 3, 3}, -2, 2);
    std::vector<double> scl(6), shift(6);
    for (auto& v : scl) v = rng.uniform(0.2, 2.0);
    for (auto& v : shift) v = rng.uniform(-1, 1);
    DTensor w = weights_like(rng, x);
    return grad_check([&] { return project(ops::channel_affine(x, scl, shift), w); }, {x});
  }});

  checks.push_back({"softmax_cross_entropy", [](Rng& rng) {
    const int n = 2 + static_cast<int>(rng.uniform_index(5));
    DTensor z = random_tensor(rng, {n, 4}, -3, 3);
    const std::vector<int> labels = random_labels(rng, n, 4);
    return grad_check([&] { return ops::softmax_cross_entropy(z, labels); }, {z});
  }});

  checks.push_back({"softmax_cross_entropy_soft", [](Rng& rng) {
    const int n = 2 + static_cast<int>(rng.uniform_index(5));
    DTensor z = random_tensor(rng, {n, 4}, -3, 3);
    std::vector<double> targets(static_cast<size_t>(n) * 4);
    for (int i = 0; i < n; ++i) {
      double sum = 0;
      for (int j = 0; j < 4; ++j) {
        targets[static_cast<size_t>(i) * 4 + j] = rng.uniform(0.01, 1.0);
        sum += targets[static_cast<size_t>(i) * 4 + j];
      }
      for (int j = 0; j < 4; ++j) targets[static_cast<size_t>(i) * 4 + j] /= sum;
    }
    return grad_check([&] { return ops::softmax_cross_entropy_soft(z, targets); }, {z});
  }});

  checks.push_back({"classifier_discrepancy", [](Rng& rng) {
    const int n = 2 + static_cast<int>(rng.uniform_index(4));
    // logits in, probabilities via softmax, so the whole loss path is checked
    DTensor z1 = random_tensor(rng, {n, 4}, -2, 2);
    DTensor z2 = random_tensor(rng, {n, 4}, -2, 2);
    return grad_check(
        [&] {
          return classifier_discrepancy(ops::softmax_rows(z1), ops::softmax_rows(z2));
        },
        {z1, z2});
  }});

  checks.push_back({"diversity_loss", [](Rng& rng) {
    const int n = 2 + static_cast<int>(rng.uniform_index(5));
    DTensor z = random_tensor(rng, {n, 5}, -2, 2);
    return grad_check([&] { return diversity_loss(ops::softmax_rows(z)); }, {z});
  }});

  checks.push_back({"subnetwork_loss", [](Rng& rng) {
    ArchConfig arch;
    arch.widths = {3 + static_cast<int>(rng.uniform_index(3)),
                   4 + static_cast<int>(rng.uniform_index(3)),
                   4 + static_cast<int>(rng.uniform_index(3))};
    arch.classes = 4;
    StyleConfusorConfig off;
    off.active = false;
    SubnetworkT<double> net(arch, off, rng.next_u64());
    DTensor images = random_tensor(rng, {2, 3, 8, 8}, 0, 1, false);
    const std::vector<int> labels = random_labels(rng, 2, arch.classes);
    return grad_check(
        [&] { return ops::softmax_cross_entropy(net.logits(images, false, nullptr), labels); },
        net.params());
  }});

  checks.push_back({"mcd_two_head_loss", [](Rng& rng) {
    ArchConfig arch;
    arch.widths = {3, 4, 4};
    arch.classes = 3;
    McdModelT<double> model(arch, rng.next_u64());
    DTensor images = random_tensor(rng, {2, 3, 8, 8}, 0, 1, false);
    const std::vector<int> labels = random_labels(rng, 2, arch.classes);
    auto params = model.extractor_params();
    for (auto& p : model.head_params()) params.push_back(p);
    return grad_check(
        [&] {
          DTensor f = model.features(images);
          DTensor ce1 = ops::softmax_cross_entropy(model.head_logits(0, f), labels);
          DTensor ce2 = ops::softmax_cross_entropy(model.head_logits(1, f), labels);
          DTensor p1 = ops::softmax_rows(model.head_logits(0, f));
          DTensor p2 = ops::softmax_rows(model.head_logits(1, f));
          return ops::sub(ops::add(ce1, ce2), classifier_discrepancy(p1, p2));
        },
        params);
  }});

  return checks;
}

}  // namespace

std::vector<GradCheckResult> gradient_suite(int instances_per_op, uint64_t seed) {
  std::vector<GradCheckResult> results;
  for (const auto& check : build_checks()) {
    Rng rng(derive_seed(seed, check.name));
    GradCheckResult r;
    r.name = check.name;
    r.instances = instances_per_op;
    for (int i = 0; i < instances_per_op; ++i)
      r.max_rel_err = std::max(r.max_rel_err, check.run(rng));
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace ssdg
