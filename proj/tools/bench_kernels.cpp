// Times the serial reference kernels against their OpenMP counterparts on
// training-shaped workloads and checks that both produce identical bits.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include <omp.h>

#include "ssdg/kernels.hpp"
#include "ssdg/rng.hpp"

using ssdg::Rng;
namespace k = ssdg::kernels;

namespace {

std::vector<float> random_vec(Rng& rng, size_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
  std::printf("%-24s serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   %s\n", name,
              serial_ms, parallel_ms, serial_ms / parallel_ms,
              identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int threads = omp_get_max_threads();
  int reps = 5;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--threads" && i + 1 < argc) threads = std::atoi(argv[++i]);
    if (arg == "--reps" && i + 1 < argc) reps = std::atoi(argv[++i]);
  }
  k::set_threads(threads);
  std::printf("kernel benchmark, %d thread(s), %d reps\n\n", threads, reps);

  Rng rng(42);

  {
    const int m = 256, kk = 256, n = 256;
    const auto a = random_vec(rng, static_cast<size_t>(m) * kk);
    const auto b = random_vec(rng, static_cast<size_t>(kk) * n);
    std::vector<float> c1(static_cast<size_t>(m) * n), c2(c1.size());
    const double ts = time_ms([&] { k::gemm_nn_serial(a.data(), b.data(), c1.data(), m, kk, n); }, reps);
    const double tp = time_ms([&] { k::gemm_nn_parallel(a.data(), b.data(), c2.data(), m, kk, n); }, reps);
    report("gemm_nn 256^3", ts, tp, std::memcmp(c1.data(), c2.data(), c1.size() * 4) == 0);
  }

  {
    const int n = 128, c = 8, h = 16, w = 16, o = 16;
    const auto x = random_vec(rng, static_cast<size_t>(n) * c * h * w);
    const auto wk = random_vec(rng, static_cast<size_t>(o) * c * 9);
    std::vector<float> y1(static_cast<size_t>(n) * o * h * w), y2(y1.size());
    const double ts = time_ms(
        [&] { k::conv2d_forward_serial(x.data(), wk.data(), y1.data(), n, c, h, w, o, 3, 3, 1, 1, h, w); },
        reps);
    const double tp = time_ms(
        [&] { k::conv2d_forward_parallel(x.data(), wk.data(), y2.data(), n, c, h, w, o, 3, 3, 1, 1, h, w); },
        reps);
    report("conv2d fwd 128x8x16x16", ts, tp, std::memcmp(y1.data(), y2.data(), y1.size() * 4) == 0);
  }

  {
    const int n = 128, c = 8, h = 16, w = 16, o = 16;
    const auto dy = random_vec(rng, static_cast<size_t>(n) * o * h * w);
    const auto wk = random_vec(rng, static_cast<size_t>(o) * c * 9);
    std::vector<float> dx1(static_cast<size_t>(n) * c * h * w), dx2(dx1.size());
    const double ts = time_ms(
        [&] { k::conv2d_backward_input_serial(dy.data(), wk.data(), dx1.data(), n, c, h, w, o, 3, 3, 1, 1, h, w); },
        reps);
    const double tp = time_ms(
        [&] { k::conv2d_backward_input_parallel(dy.data(), wk.data(), dx2.data(), n, c, h, w, o, 3, 3, 1, 1, h, w); },
        reps);
    report("conv2d bwd input", ts, tp, std::memcmp(dx1.data(), dx2.data(), dx1.size() * 4) == 0);
  }

  {
    const int n = 128, c = 8, h = 16, w = 16, o = 16;
    const auto x = random_vec(rng, static_cast<size_t>(n) * c * h * w);
    const auto dy = random_vec(rng, static_cast<size_t>(n) * o * h * w);
    std::vector<float> dw1(static_cast<size_t>(o) * c * 9), dw2(dw1.size());
    const double ts = time_ms(
        [&] { k::conv2d_backward_weight_serial(x.data(), dy.data(), dw1.data(), n, c, h, w, o, 3, 3, 1, 1, h, w); },
        reps);
    const double tp = time_ms(
        [&] { k::conv2d_backward_weight_parallel(x.data(), dy.data(), dw2.data(), n, c, h, w, o, 3, 3, 1, 1, h, w); },
        reps);
    report("conv2d bwd weight", ts, tp, std::memcmp(dw1.data(), dw2.data(), dw1.size() * 4) == 0);
  }

  return 0;
}
