#include "ssdg/kernels.hpp"

#include <atomic>

namespace ssdg::kernels {

namespace {
std::atomic<int> g_threads{1};
}

void set_threads(int n) { g_threads.store(n < 1 ? 1 : n); }
int threads() { return g_threads.load(); }

// ---------------------------------------------------------------- gemm

template <typename T>
void gemm_nn_serial(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = T(0);
    for (int p = 0; p < k; ++p) {
      const T aip = a[static_cast<size_t>(i) * k + p];
      const T* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <typename T>
void gemm_nn_parallel(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for num_threads(g_threads.load()) schedule(static)
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = T(0);
    for (int p = 0; p < k; ++p) {
      const T aip = a[static_cast<size_t>(i) * k + p];
      const T* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
  if (g_threads.load() > 1)
    gemm_nn_parallel(a, b, c, m, k, n);
  else
    gemm_nn_serial(a, b, c, m, k, n);
}

template <typename T>
void gemm_nt_serial(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<size_t>(i) * k;
    T* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + static_cast<size_t>(j) * k;
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
}

template <typename T>
void gemm_nt_parallel(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for num_threads(g_threads.load()) schedule(static)
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<size_t>(i) * k;
    T* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + static_cast<size_t>(j) * k;
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n) {
  if (g_threads.load() > 1)
    gemm_nt_parallel(a, b, c, m, k, n);
  else
    gemm_nt_serial(a, b, c, m, k, n);
}

template <typename T>
void gemm_tn_serial(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = T(0);
    for (int p = 0; p < k; ++p) {
      const T api = a[static_cast<size_t>(p) * m + i];
      const T* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

template <typename T>
void gemm_tn_parallel(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for num_threads(g_threads.load()) schedule(static)
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = T(0);
    for (int p = 0; p < k; ++p) {
      const T api = a[static_cast<size_t>(p) * m + i];
      const T* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n) {
  if (g_threads.load() > 1)
    gemm_tn_parallel(a, b, c, m, k, n);
  else
    gemm_tn_serial(a, b, c, m, k, n);
}

// ---------------------------------------------------------------- conv2d

namespace {

template <typename T>
inline void conv2d_forward_one(const T* x, const T* w, T* y, int c, int h, int iw,
                               int o, int kh, int kw, int stride, int pad, int ho, int wo,
                               int in, int io) {
  const T* xn = x + static_cast<size_t>(in) * c * h * iw;
  const T* wo_ = w + static_cast<size_t>(io) * c * kh * kw;
  T* yn = y + (static_cast<size_t>(in) * o + io) * ho * wo;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      T acc = T(0);
      for (int ic = 0; ic < c; ++ic) {
        const T* xc = xn + static_cast<size_t>(ic) * h * iw;
        const T* wc = wo_ + static_cast<size_t>(ic) * kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          const int yy = oy * stride - pad + ky;
          if (yy < 0 || yy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int xx = ox * stride - pad + kx;
            if (xx < 0 || xx >= iw) continue;
            acc += xc[static_cast<size_t>(yy) * iw + xx] * wc[static_cast<size_t>(ky) * kw + kx];
          }
        }
      }
      yn[static_cast<size_t>(oy) * wo + ox] = acc;
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward_serial(const T* x, const T* w, T* y, int n, int c, int h, int iw,
                           int o, int kh, int kw, int stride, int pad, int ho, int wo) {
  for (int in = 0; in < n; ++in)
    for (int io = 0; io < o; ++io)
      conv2d_forward_one(x, w, y, c, h, iw, o, kh, kw, stride, pad, ho, wo, in, io);
}

template <typename T>
void conv2d_forward_parallel(const T* x, const T* w, T* y, int n, int c, int h, int iw,
                             int o, int kh, int kw, int stride, int pad, int ho, int wo) {
  const int total = n * o;
#pragma omp parallel for num_threads(g_threads.load()) schedule(static)
  for (int t = 0; t < total; ++t)
    conv2d_forward_one(x, w, y, c, h, iw, o, kh, kw, stride, pad, ho, wo, t / o, t % o);
}

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, int n, int c, int h, int iw,
                    int o, int kh, int kw, int stride, int pad, int ho, int wo) {
  if (g_threads.load() > 1)
    conv2d_forward_parallel(x, w, y, n, c, h, iw, o, kh, kw, stride, pad, ho, wo);
  else
    conv2d_forward_serial(x, w, y, n, c, h, iw, o, kh, kw, stride, pad, ho, wo);
}

namespace {

template <typename T>
inline void conv2d_backward_input_one(const T* dy, const T* w, T* dx, int c, int h, int iw,
                                      int o, int kh, int kw, int stride, int pad, int ho, int wo,
                                      int in, int ic) {
  T* dxc = dx + (static_cast<size_t>(in) * c + ic) * h * iw;
  const T* dyn = dy + static_cast<size_t>(in) * o * ho * wo;
  for (int yy = 0; yy < h; ++yy) {
    for (int xx = 0; xx < iw; ++xx) {
      T acc = T(0);
      for (int io = 0; io < o; ++io) {
        const T* dyo = dyn + static_cast<size_t>(io) * ho * wo;
        const T* wc = w + (static_cast<size_t>(io) * c + ic) * kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          const int num_y = yy + pad - ky;
          if (num_y < 0 || num_y % stride != 0) continue;
          const int oy = num_y / stride;
          if (oy >= ho) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int num_x = xx + pad - kx;
            if (num_x < 0 || num_x % stride != 0) continue;
            const int ox = num_x / stride;
            if (ox >= wo) continue;
            acc += dyo[static_cast<size_t>(oy) * wo + ox] * wc[static_cast<size_t>(ky) * kw + kx];
          }
        }
      }
      dxc[static_cast<size_t>(yy) * iw + xx] = acc;
    }
  }
}

template <typename T>
inline void conv2d_backward_weight_one(const T* x, const T* dy, T* dw, int n, int c, int h, int iw,
                                       int o, int kh, int kw, int stride, int pad, int ho, int wo,
                                       int io, int ic) {
  T* dwc = dw + (static_cast<size_t>(io) * c + ic) * kh * kw;
  for (int ky = 0; ky < kh; ++ky) {
    for (int kx = 0; kx < kw; ++kx) {
      T acc = T(0);
      for (int in = 0; in < n; ++in) {
        const T* xc = x + (static_cast<size_t>(in) * c + ic) * h * iw;
        const T* dyo = dy + (static_cast<size_t>(in) * o + io) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int yy = oy * stride - pad + ky;
          if (yy < 0 || yy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int xx = ox * stride - pad + kx;
            if (xx < 0 || xx >= iw) continue;
            acc += xc[static_cast<size_t>(yy) * iw + xx] * dyo[static_cast<size_t>(oy) * wo + ox];
          }
        }
      }
      dwc[static_cast<size_t>(ky) * kw + kx] = acc;
    }
  }
}

}  // namespace

template <typename T>
void conv2d_backward_input_serial(const T* dy, const T* w, T* dx, int n, int c, int h, int iw,
                                  int o, int kh, int kw, int stride, int pad, int ho, int wo) {
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic)
      conv2d_backward_input_one(dy, w, dx, c, h, iw, o, kh, kw, stride, pad, ho, wo, in, ic);
}

template <typename T>
void conv2d_backward_input_parallel(const T* dy, const T* w, T* dx, int n, int c, int h, int iw,
                                    int o, int kh, int kw, int stride, int pad, int ho, int wo) {
  const int total = n * c;
#pragma omp parallel for num_threads(g_threads.load()) schedule(static)
  for (int t = 0; t < total; ++t)
    conv2d_backward_input_one(dy, w, dx, c, h, iw, o, kh, kw, stride, pad, ho, wo, t / c, t % c);
}

template <typename T>
void conv2d_backward_input(const T* dy, const T* w, T* dx, int n, int c, int h, int iw,
                           int o, int kh, int kw, int stride, int pad, int ho, int wo) {
  if (g_threads.load() > 1)
    conv2d_backward_input_parallel(dy, w, dx, n, c, h, iw, o, kh, kw, stride, pad, ho, wo);
  else
    conv2d_backward_input_serial(dy, w, dx, n, c, h, iw, o, kh, kw, stride, pad, ho, wo);
}

template <typename T>
void conv2d_backward_weight_serial(const T* x, const T* dy, T* dw, int n, int c, int h, int iw,
                                   int o, int kh, int kw, int stride, int pad, int ho, int wo) {
  for (int io = 0; io < o; ++io)
    for (int ic = 0; ic < c; ++ic)
      conv2d_backward_weight_one(x, dy, dw, n, c, h, iw, o, kh, kw, stride, pad, ho, wo, io, ic);
}

template <typename T>
void conv2d_backward_weight_parallel(const T* x, const T* dy, T* dw, int n, int c, int h, int iw,
                                     int o, int kh, int kw, int stride, int pad, int ho, int wo) {
  const int total = o * c;
#pragma omp parallel for num_threads(g_threads.load()) schedule(static)
  for (int t = 0; t < total; ++t)
    conv2d_backward_weight_one(x, dy, dw, n, c, h, iw, o, kh, kw, stride, pad, ho, wo, t / c, t % c);
}

template <typename T>
void conv2d_backward_weight(const T* x, const T* dy, T* dw, int n, int c, int h, int iw,
                            int o, int kh, int kw, int stride, int pad, int ho, int wo) {
  if (g_threads.load() > 1)
    conv2d_backward_weight_parallel(x, dy, dw, n, c, h, iw, o, kh, kw, stride, pad, ho, wo);
  else
    conv2d_backward_weight_serial(x, dy, dw, n, c, h, iw, o, kh, kw, stride, pad, ho, wo);
}

// Explicit instantiations: float for training, double for verification.
#define SSDG_INSTANTIATE_KERNELS(T)                                                              \
  template void gemm_nn_serial<T>(const T*, const T*, T*, int, int, int);                        \
  template void gemm_nn_parallel<T>(const T*, const T*, T*, int, int, int);                      \
  template void gemm_nn<T>(const T*, const T*, T*, int, int, int);                               \
  template void gemm_nt_serial<T>(const T*, const T*, T*, int, int, int);                        \
  template void gemm_nt_parallel<T>(const T*, const T*, T*, int, int, int);                      \
  template void gemm_nt<T>(const T*, const T*, T*, int, int, int);                               \
  template void gemm_tn_serial<T>(const T*, const T*, T*, int, int, int);                        \
  template void gemm_tn_parallel<T>(const T*, const T*, T*, int, int, int);                      \
  template void gemm_tn<T>(const T*, const T*, T*, int, int, int);                               \
  template void conv2d_forward_serial<T>(const T*, const T*, T*, int, int, int, int, int, int,   \
                                         int, int, int, int, int);                               \
  template void conv2d_forward_parallel<T>(const T*, const T*, T*, int, int, int, int, int, int, \
                                           int, int, int, int, int);                             \
  template void conv2d_forward<T>(const T*, const T*, T*, int, int, int, int, int, int, int,     \
                                  int, int, int, int);                                           \
  template void conv2d_backward_input_serial<T>(const T*, const T*, T*, int, int, int, int, int, \
                                                int, int, int, int, int, int);                   \
  template void conv2d_backward_input_parallel<T>(const T*, const T*, T*, int, int, int, int,    \
                                                  int, int, int, int, int, int, int);            \
  template void conv2d_backward_input<T>(const T*, const T*, T*, int, int, int, int, int, int,   \
                                         int, int, int, int, int);                               \
  template void conv2d_backward_weight_serial<T>(const T*, const T*, T*, int, int, int, int,     \
                                                 int, int, int, int, int, int, int);             \
  template void conv2d_backward_weight_parallel<T>(const T*, const T*, T*, int, int, int, int,   \
                                                   int, int, int, int, int, int, int);           \
  template void conv2d_backward_weight<T>(const T*, const T*, T*, int, int, int, int, int, int,  \
                                          int, int, int, int, int);

SSDG_INSTANTIATE_KERNELS(float)
SSDG_INSTANTIATE_KERNELS(double)

#undef SSDG_INSTANTIATE_KERNELS

}  // namespace ssdg::kernels
