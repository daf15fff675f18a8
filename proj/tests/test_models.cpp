#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "ssdg/grad_check.hpp"
#include "ssdg/models.hpp"

using namespace ssdg;
using DTensor = TensorT<double>;

namespace {

Tensor random_images(Rng& rng, int n, int c, int h, int w) {
  std::vector<float> d(static_cast<size_t>(n) * c * h * w);
  for (auto& v : d) v = static_cast<float>(rng.uniform(0, 1));
  return Tensor::from_data({n, c, h, w}, std::move(d));
}

}  // namespace

TEST_CASE("subnetwork construction") {
  ArchConfig arch;
  StyleConfusorConfig sc;
  SUBCASE("same seed gives bit-identical parameters") {
    Subnetwork a(arch, sc, 42), b(arch, sc, 42);
    const auto pa = a.params(), pb = b.params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i)
      for (size_t j = 0; j < pa[i].numel(); ++j) CHECK(pa[i].data()[j] == pb[i].data()[j]);
  }
  SUBCASE("different seeds differ in at least one parameter") {
    Subnetwork a(arch, sc, 1), b(arch, sc, 2);
    const auto pa = a.params(), pb = b.params();
    bool any_diff = false;
    for (size_t i = 0; i < pa.size(); ++i)
      for (size_t j = 0; j < pa[i].numel(); ++j) any_diff |= pa[i].data()[j] != pb[i].data()[j];
    CHECK(any_diff);
  }
  SUBCASE("forward maps N x 3 x 16 x 16 to N x K logits") {
    Subnetwork net(arch, sc, 7);
    Rng rng(3);
    Tensor logits = net.logits(random_images(rng, 4, 3, 16, 16), false, nullptr);
    CHECK(logits.shape() == std::vector<int>{4, arch.classes});
  }
  SUBCASE("invalid widths are rejected") {
    ArchConfig bad;
    bad.widths = {8, 0, 16};
    CHECK_THROWS_AS(Subnetwork(bad, sc, 1), ConfigError);
    bad.widths.clear();
    CHECK_THROWS_AS(Subnetwork(bad, sc, 1), ConfigError);
  }
}

TEST_CASE("mcd model heads differ at initialization") {
  ArchConfig arch;
  McdModel model(arch, 99);
  const auto heads = model.head_params();
  REQUIRE(heads.size() == 4);
  bool any_diff = false;
  for (size_t j = 0; j < heads[0].numel(); ++j)
    any_diff |= heads[0].data()[j] != heads[2].data()[j];
  CHECK(any_diff);
}

TEST_CASE("style confusor identity cases") {
  Rng rng(5);
  // sigma >> eps: inputs with strong spatial variation
  Tensor f = random_images(rng, 6, 4, 8, 8);
  const int n = 6;

  SUBCASE("lambda forced to one returns the input") {
    std::vector<int> perm(n);
    Rng prng(1);
    prng.permutation(perm.data(), perm.size());  // arbitrary permutation
    const std::vector<float> lambdas(n, 1.0f);
    Tensor out = style_confusor_apply(f, perm, lambdas, 1e-6);
    for (size_t i = 0; i < f.numel(); ++i)
      CHECK(out.data()[i] == doctest::Approx(f.data()[i]).epsilon(1e-5));
  }

  SUBCASE("identity permutation returns the input regardless of lambda") {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<float> lambdas(n);
    Rng lrng(2);
    for (auto& l : lambdas) l = static_cast<float>(lrng.uniform());
    Tensor out = style_confusor_apply(f, perm, lambdas, 1e-6);
    for (size_t i = 0; i < f.numel(); ++i)
      CHECK(out.data()[i] == doctest::Approx(f.data()[i]).epsilon(1e-5));
  }

  SUBCASE("inference mode and inactive config are exact identities") {
    StyleConfusorConfig sc;
    Rng crng(3);
    Tensor out = style_confusor(f, sc, crng, false);
    for (size_t i = 0; i < f.numel(); ++i) CHECK(out.data()[i] == f.data()[i]);
    sc.active = false;
    Tensor out2 = style_confusor(f, sc, crng, true);
    for (size_t i = 0; i < f.numel(); ++i) CHECK(out2.data()[i] == f.data()[i]);
  }
}

TEST_CASE("style confusor output statistics match beta and gamma") {
  Rng rng(17);
  const int n = 5, c = 3;
  Tensor f = random_images(rng, n, c, 8, 8);
  std::vector<int> perm(n);
  Rng prng(7);
  prng.permutation(perm.data(), perm.size());
  std::vector<float> lambdas(n);
  for (auto& l : lambdas) l = static_cast<float>(prng.uniform());
  const double eps = 1e-6;

  auto [mu, sigma] = ops::channel_stats(f);
  Tensor out = style_confusor_apply(f, perm, lambdas, eps);
  auto [mu_out, sigma_out] = ops::channel_stats(out);

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const size_t idx = static_cast<size_t>(i) * c + j;
      const size_t pidx = static_cast<size_t>(perm[static_cast<size_t>(i)]) * c + j;
      const float lam = lambdas[static_cast<size_t>(i)];
      const float beta = lam * mu.data()[idx] + (1 - lam) * mu.data()[pidx];
      const float gamma = lam * sigma.data()[idx] + (1 - lam) * sigma.data()[pidx];
      const float expected_sigma =
          gamma * sigma.data()[idx] / (sigma.data()[idx] + static_cast<float>(eps));
      CHECK(mu_out.data()[idx] == doctest::Approx(beta).epsilon(1e-4));
      CHECK(sigma_out.data()[idx] == doctest::Approx(expected_sigma).epsilon(1e-4));
    }
}

TEST_CASE("style confusor preserves shape and draws lambdas in [0,1]") {
  Rng rng(23);
  Tensor f = random_images(rng, 8, 4, 6, 6);
  StyleConfusorConfig sc;
  Rng crng(11);
  Tensor out = style_confusor(f, sc, crng, true);
  CHECK(out.shape() == f.shape());

  Rng brng(13);
  for (int i = 0; i < 1000; ++i) {
    const double l = brng.beta(sc.beta_concentration);
    CHECK(l >= 0.0);
    CHECK(l <= 1.0);
  }
}

TEST_CASE("style confusor gradient matches finite differences with frozen statistics") {
  // The layer's executed semantics are a per-(sample,channel) affine map with
  // detached coefficients; freeze them and check the recorded gradient.
  Rng rng(29);
  const int n = 3, c = 2;
  DTensor f = [&] {
    std::vector<double> d(static_cast<size_t>(n) * c * 16);
    for (auto& v : d) v = rng.uniform(0, 1);
    return DTensor::from_data({n, c, 4, 4}, std::move(d), true);
  }();
  std::vector<int> perm = {2, 0, 1};
  const std::vector<double> lambdas = {0.3, 0.8, 0.1};

  // Coefficients captured once from the unperturbed input.
  auto [mu, sigma] = ops::channel_stats(f);
  std::vector<double> scl(static_cast<size_t>(n) * c), shift(scl.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const size_t idx = static_cast<size_t>(i) * c + j;
      const size_t pidx = static_cast<size_t>(perm[static_cast<size_t>(i)]) * c + j;
      const double lam = lambdas[static_cast<size_t>(i)];
      const double beta = lam * mu.data()[idx] + (1 - lam) * mu.data()[pidx];
      const double gamma = lam * sigma.data()[idx] + (1 - lam) * sigma.data()[pidx];
      scl[idx] = gamma / (sigma.data()[idx] + 1e-6);
      shift[idx] = beta - mu.data()[idx] * scl[idx];
    }

  // Recorded gradient of the live layer...
  f.zero_grad();
  {
    DTensor live = style_confusor_apply(f, perm, lambdas, 1e-6);
    ops::sum_all(ops::mul(live, live)).backward();
  }
  const std::vector<double> live_grad(f.grad().begin(), f.grad().end());

  // ...equals the frozen affine's gradient, which finite differences confirm.
  const double err = grad_check(
      [&] {
        DTensor y = ops::channel_affine(f, scl, shift);
        return ops::sum_all(ops::mul(y, y));
      },
      {f});
  CHECK(err < 1e-6);

  f.zero_grad();
  DTensor y = ops::channel_affine(f, scl, shift);
  ops::sum_all(ops::mul(y, y)).backward();
  for (size_t i = 0; i < live_grad.size(); ++i)
    CHECK(live_grad[i] == doctest::Approx(f.grad()[i]).epsilon(1e-9));
}

TEST_CASE("predict") {
  ArchConfig arch;
  StyleConfusorConfig sc;
  Subnetwork net(arch, sc, 3);
  Rng rng(31);
  Tensor images = random_images(rng, 5, 3, 16, 16);

  SUBCASE("rows sum to one") {
    Tensor p = net.predict(images);
    for (int i = 0; i < 5; ++i) {
      float sum = 0;
      for (int j = 0; j < arch.classes; ++j)
        sum += p.data()[static_cast<size_t>(i) * arch.classes + j];
      CHECK(std::fabs(sum - 1.0f) < 1e-6f);
    }
  }
  SUBCASE("identical inputs give identical outputs") {
    Tensor a = net.predict(images);
    Tensor b = net.predict(images);
    for (size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
  }
  SUBCASE("zero weights give uniform rows") {
    Subnetwork zero(arch, sc, 5);
    for (auto& p : zero.params())
      for (auto& v : p.data()) v = 0.0f;
    Tensor p = zero.predict(images);
    for (const float v : p.data())
      CHECK(v == doctest::Approx(1.0 / arch.classes).epsilon(1e-6));
  }
}

TEST_CASE("full subnetwork loss passes the 64-bit gradient check") {
  ArchConfig arch;
  arch.widths = {4, 6, 6};
  arch.classes = 4;
  StyleConfusorConfig off;
  off.active = false;
  SubnetworkT<double> net(arch, off, 51);
  Rng rng(52);
  std::vector<double> img(2 * 3 * 10 * 10);
  for (auto& v : img) v = rng.uniform(0, 1);
  DTensor images = DTensor::from_data({2, 3, 10, 10}, std::move(img));
  const std::vector<int> labels = {1, 3};
  const double err = grad_check(
      [&] { return ops::softmax_cross_entropy(net.logits(images, false, nullptr), labels); },
      net.params());
  CHECK(err < 1e-4);
}

TEST_CASE("subnetwork checkpoint round trip") {
  ArchConfig arch;
  arch.widths = {4, 8, 8};
  StyleConfusorConfig sc;
  Subnetwork net(arch, sc, 77);
  const std::string path =
      (std::filesystem::temp_directory_path() / "ssdg_subnet.ckpt").string();
  save_subnetwork(path, net);
  const Subnetwork back = load_subnetwork(path, sc);
  const auto pa = net.params(), pb = back.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i].shape() == pb[i].shape());
    for (size_t j = 0; j < pa[i].numel(); ++j) CHECK(pa[i].data()[j] == pb[i].data()[j]);
  }
  std::filesystem::remove(path);
}

TEST_CASE("arch string round trip") {
  ArchConfig arch;
  arch.widths = {4, 8, 8};
  arch.classes = 3;
  const ArchConfig back = arch_from_string(arch_to_string(arch));
  CHECK(back.widths == arch.widths);
  CHECK(back.classes == arch.classes);
  CHECK(back.in_channels == arch.in_channels);
  CHECK_THROWS_AS(arch_from_string("widths="), ConfigError);
}
