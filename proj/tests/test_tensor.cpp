#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "ssdg/checkpoint.hpp"
#include "ssdg/grad_check.hpp"
#include "ssdg/ops.hpp"
#include "ssdg/rng.hpp"
#include "ssdg/sgd.hpp"
#include "ssdg/tensor.hpp"

using namespace ssdg;
using DTensor = TensorT<double>;

namespace {

DTensor random_dtensor(Rng& rng, std::vector<int> shape, double lo = -2, double hi = 2,
                       bool requires_grad = true) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(lo, hi);
  return DTensor::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

TEST_CASE("matmul identity and hand-evaluated product") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor out = ops::matmul(eye, m);
  CHECK(out.data()[0] == 1.0f);
  CHECK(out.data()[1] == 2.0f);
  CHECK(out.data()[2] == 3.0f);
  CHECK(out.data()[3] == 4.0f);

  Tensor a = Tensor::from_data({1, 2}, {1, 2});
  Tensor b = Tensor::from_data({2, 1}, {3, 4});
  CHECK(ops::matmul(a, b).item() == doctest::Approx(11.0));

  CHECK_THROWS_AS(ops::matmul(a, Tensor::from_data({3, 1}, {1, 2, 3})), std::invalid_argument);
}

TEST_CASE("gradient of sum(matmul) w.r.t. A is ones x B^T") {
  Rng rng(11);
  DTensor a = random_dtensor(rng, {3, 4});
  DTensor b = random_dtensor(rng, {4, 2});
  DTensor loss = ops::sum_all(ops::matmul(a, b));
  loss.backward();
  // d/dA sum(AB) = ones(3,2) * B^T
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      double expected = 0;
      for (int c = 0; c < 2; ++c) expected += b.data()[static_cast<size_t>(j) * 2 + c];
      CHECK(a.grad()[static_cast<size_t>(i) * 4 + j] == doctest::Approx(expected).epsilon(1e-12));
    }
  // finite-difference oracle on the same graph
  CHECK(grad_check([&] { return ops::sum_all(ops::matmul(a, b)); }, {a, b}) < 1e-6);
}

TEST_CASE("conv2d 1x1 unit kernel maps to channel sum") {
  Rng rng(3);
  Tensor x = Tensor::from_data({1, 2, 3, 3}, [&] {
    std::vector<float> d(18);
    for (auto& v : d) v = static_cast<float>(rng.uniform(0, 1));
    return d;
  }());
  Tensor w = Tensor::from_data({1, 2, 1, 1}, {1.0f, 1.0f});
  Tensor y = ops::conv2d(x, w, 1, 0);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 3, 3});
  for (int p = 0; p < 9; ++p)
    CHECK(y.data()[p] == doctest::Approx(x.data()[p] + x.data()[9 + p]).epsilon(1e-6));
}

TEST_CASE("conv2d 3x3 ones on 3x3 ones gives 9") {
  Tensor x = Tensor::ones({1, 1, 3, 3});
  Tensor w = Tensor::ones({1, 1, 3, 3});
  Tensor y = ops::conv2d(x, w, 1, 0);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 1, 1});
  CHECK(y.item() == doctest::Approx(9.0));
}

TEST_CASE("conv2d shape errors") {
  Tensor x = Tensor::ones({1, 1, 2, 2});
  Tensor w = Tensor::ones({1, 1, 3, 3});
  CHECK_THROWS_AS(ops::conv2d(x, w, 1, 0), std::invalid_argument);  // kernel larger than input
  Tensor w1 = Tensor::ones({1, 2, 2, 2});
  CHECK_THROWS_AS(ops::conv2d(x, w1, 1, 0), std::invalid_argument);  // channel mismatch
}

TEST_CASE("conv2d matches central differences in 64-bit mode") {
  Rng rng(7);
  for (const int stride : {1, 2}) {
    for (const int pad : {0, 1}) {
      DTensor x = random_dtensor(rng, {2, 2, 5, 5}, -1, 1);
      DTensor w = random_dtensor(rng, {3, 2, 3, 3}, -1, 1);
      const double err =
          grad_check([&] { return ops::sum_all(ops::conv2d(x, w, stride, pad)); }, {x, w});
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("softmax_cross_entropy examples") {
  // uniform logits, K=4 -> log 4
  Tensor z = Tensor::full({3, 4}, 0.7f);
  CHECK(ops::softmax_cross_entropy(z, {0, 1, 3}).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-6));

  // near one-hot logits -> loss near 0
  Tensor z2 = Tensor::from_data({2, 3}, {30, 0, 0, 0, 0, 30});
  CHECK(ops::softmax_cross_entropy(z2, {0, 2}).item() < 1e-6);

  CHECK_THROWS_AS(ops::softmax_cross_entropy(z2, {0, 3}), std::out_of_range);
  CHECK_THROWS_AS(ops::softmax_cross_entropy(z2, {0}), std::invalid_argument);
}

TEST_CASE("softmax_cross_entropy matches scalar-loop oracle on a random instance") {
  Rng rng(19);
  const int n = 5, k = 3;
  DTensor z = random_dtensor(rng, {n, k}, -3, 3);
  std::vector<int> labels;
  for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.uniform_index(k)));

  double expected = 0;
  for (int i = 0; i < n; ++i) {
    double denom = 0;
    for (int j = 0; j < k; ++j) denom += std::exp(z.data()[static_cast<size_t>(i) * k + j]);
    const double p =
        std::exp(z.data()[static_cast<size_t>(i) * k + labels[static_cast<size_t>(i)]]) / denom;
    expected += -std::log(p);
  }
  expected /= n;
  CHECK(ops::softmax_cross_entropy(z, labels).item() == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("channel_stats") {
  SUBCASE("constant field") {
    auto [mu, sigma] = ops::channel_stats(Tensor::full({2, 3, 4, 4}, 0.25f));
    REQUIRE(mu.shape() == std::vector<int>{2, 3});
    REQUIRE(sigma.shape() == std::vector<int>{2, 3});
    for (const float v : mu.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-6));
    for (const float v : sigma.data()) CHECK(v == doctest::Approx(0.0));
  }
  SUBCASE("values {1,3} give mu 2 sigma 1") {
    auto [mu, sigma] = ops::channel_stats(Tensor::from_data({1, 1, 1, 2}, {1, 3}));
    CHECK(mu.item() == doctest::Approx(2.0));
    CHECK(sigma.item() == doctest::Approx(1.0));
  }
  SUBCASE("outputs are detached") {
    Tensor x = Tensor::ones({1, 2, 2, 2}, true);
    auto [mu, sigma] = ops::channel_stats(x);
    CHECK_FALSE(mu.requires_grad());
    CHECK_FALSE(sigma.requires_grad());
  }
}

TEST_CASE("backward basics") {
  SUBCASE("sum(x) gives ones") {
    Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
    ops::sum_all(x).backward();
    for (const float g : x.grad()) CHECK(g == 1.0f);
  }
  SUBCASE("sum(x*x) gives 2x") {
    Tensor x = Tensor::from_data({3}, {1, -2, 0.5f}, true);
    ops::sum_all(ops::mul(x, x)).backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(-4.0));
    CHECK(x.grad()[2] == doctest::Approx(1.0));
  }
  SUBCASE("repeated backward accumulates additively") {
    Tensor x = Tensor::ones({3}, true);
    Tensor loss = ops::sum_all(x);
    loss.backward();
    loss.backward();
    for (const float g : x.grad()) CHECK(g == 2.0f);
  }
  SUBCASE("non-scalar backward is a contract error") {
    Tensor x = Tensor::ones({2, 2}, true);
    CHECK_THROWS_AS(ops::mul(x, x).backward(), std::logic_error);
  }
  SUBCASE("diamond graph visits each node once") {
    // loss = sum(y + y) with y = 2x: grad must be 4, not 8
    Tensor x = Tensor::ones({2}, true);
    Tensor y = ops::scale(x, 2.0f);
    ops::sum_all(ops::add(y, y)).backward();
    for (const float g : x.grad()) CHECK(g == 4.0f);
  }
}

TEST_CASE("composite graph matches finite differences in 64-bit mode") {
  Rng rng(23);
  for (int inst = 0; inst < 5; ++inst) {
    DTensor x = random_dtensor(rng, {3, 4}, 0.1, 2.0);
    DTensor w = random_dtensor(rng, {4, 4}, -1, 1);
    const double err = grad_check(
        [&] {
          DTensor h = ops::relu(ops::matmul(x, w));
          DTensor p = ops::softmax_rows(h);
          return ops::sub(ops::mean_all(ops::mul(h, h)), ops::sum_all(ops::xlogx(p)));
        },
        {x, w});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("grad_check on a linear function is near exact") {
  Rng rng(5);
  DTensor x = random_dtensor(rng, {4}, -1, 1);
  DTensor w = random_dtensor(rng, {4}, -1, 1, false);
  CHECK(grad_check([&] { return ops::sum_all(ops::mul(x, w)); }, {x}) <= 1e-9);
}

TEST_CASE("softmax rows are a probability distribution") {
  Rng rng(31);
  for (int inst = 0; inst < 20; ++inst) {
    Tensor z = Tensor::from_data({4, 6}, [&] {
      std::vector<float> d(24);
      for (auto& v : d) v = static_cast<float>(rng.uniform(-8, 8));
      return d;
    }());
    Tensor p = ops::softmax_rows(z);
    for (int i = 0; i < 4; ++i) {
      float sum = 0;
      for (int j = 0; j < 6; ++j) {
        const float v = p.data()[static_cast<size_t>(i) * 6 + j];
        CHECK(v >= 0.0f);
        sum += v;
      }
      CHECK(std::fabs(sum - 1.0f) < 1e-6f);
    }
  }
}

TEST_CASE("forward results are bit-identical across runs") {
  auto run = [] {
    Rng rng(77);
    Tensor x = Tensor::from_data({2, 3, 4, 4}, [&] {
      std::vector<float> d(96);
      for (auto& v : d) v = static_cast<float>(rng.uniform(-1, 1));
      return d;
    }());
    Tensor w = Tensor::from_data({2, 3, 3, 3}, [&] {
      std::vector<float> d(54);
      for (auto& v : d) v = static_cast<float>(rng.uniform(-1, 1));
      return d;
    }());
    return ops::softmax_rows(ops::global_avg_pool(ops::conv2d(x, w, 1, 1)));
  };
  Tensor a = run(), b = run();
  REQUIRE(a.numel() == b.numel());
  for (size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("sgd") {
  SUBCASE("plain step is p - lr*grad exactly") {
    Tensor p = Tensor::from_data({3}, {1.0f, 2.0f, 3.0f}, true);
    SgdOptimizer opt({p}, 0.5, 0.0, 0.0);
    ops::sum_all(ops::mul(p, p)).backward();  // grad = 2p
    const std::vector<float> before(p.data().begin(), p.data().end());
    const std::vector<float> grads(p.grad().begin(), p.grad().end());
    opt.step();
    for (int i = 0; i < 3; ++i)
      CHECK(p.data()[static_cast<size_t>(i)] ==
            before[static_cast<size_t>(i)] - 0.5f * grads[static_cast<size_t>(i)]);
  }
  SUBCASE("lr zero leaves parameters bit-identical") {
    Tensor p = Tensor::from_data({3}, {1.5f, -2.25f, 0.125f}, true);
    SgdOptimizer opt({p}, 0.0, 0.9, 5e-4);
    ops::sum_all(ops::mul(p, p)).backward();
    opt.step();
    CHECK(p.data()[0] == 1.5f);
    CHECK(p.data()[1] == -2.25f);
    CHECK(p.data()[2] == 0.125f);
  }
  SUBCASE("momentum accumulates velocity") {
    Tensor p = Tensor::from_data({1}, {1.0f}, true);
    SgdOptimizer opt({p}, 0.1, 0.5, 0.0);
    p.grad()[0] = 1.0f;
    opt.step();  // v=1, p=0.9
    CHECK(p.data()[0] == doctest::Approx(0.9));
    p.zero_grad();
    p.grad()[0] = 1.0f;
    opt.step();  // v=1.5, p=0.75
    CHECK(p.data()[0] == doctest::Approx(0.75));
  }
  SUBCASE("invalid hyperparameters") {
    Tensor p = Tensor::ones({1}, true);
    CHECK_THROWS_AS(SgdOptimizer({p}, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(SgdOptimizer({p}, 0.1, 1.0), std::invalid_argument);
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  Rng rng(101);
  Checkpoint ckpt;
  ckpt.arch = "in=3;widths=4,6;classes=5";
  for (int e = 0; e < 3; ++e) {
    CheckpointEntry entry;
    entry.name = "param" + std::to_string(e);
    entry.shape = {2, 3};
    for (int i = 0; i < 6; ++i) entry.values.push_back(static_cast<float>(rng.uniform(-10, 10)));
    ckpt.entries.push_back(entry);
  }
  const std::string path =
      (std::filesystem::temp_directory_path() / "ssdg_ckpt_test.bin").string();
  save_checkpoint(path, ckpt);
  const Checkpoint loaded = load_checkpoint(path);
  REQUIRE(loaded.entries.size() == ckpt.entries.size());
  CHECK(loaded.arch == ckpt.arch);
  for (size_t e = 0; e < ckpt.entries.size(); ++e) {
    CHECK(loaded.entries[e].name == ckpt.entries[e].name);
    CHECK(loaded.entries[e].shape == ckpt.entries[e].shape);
    for (size_t i = 0; i < ckpt.entries[e].values.size(); ++i)
      CHECK(std::bit_cast<uint32_t>(loaded.entries[e].values[i]) ==
            std::bit_cast<uint32_t>(ckpt.entries[e].values[i]));
  }
  std::filesystem::remove(path);
}

TEST_CASE("tensor invariants") {
  Tensor t = Tensor::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.data().size() == 24);
  CHECK(t.grad().size() == t.numel());
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0f}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::ones({2}).item(), std::logic_error);
}
