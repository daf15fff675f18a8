#pragma once

#include <cstddef>

// Dense compute kernels behind the autograd ops. Every kernel comes in a
// serial reference flavor and an OpenMP flavor; the unsuffixed entry point
// dispatches on the configured thread count. The parallel flavors split
// work so that each output element is reduced in the same order as the
// serial code, which keeps results bit-identical at any thread count.

namespace ssdg::kernels {

// Thread count used by the *_parallel kernels; 1 selects the serial path.
void set_threads(int n);
int threads();

// c[m,n] = a[m,k] * b[k,n]
template <typename T>
void gemm_nn_serial(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void gemm_nn_parallel(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n);

// c[m,n] = a[m,k] * b[n,k]^T
template <typename T>
void gemm_nt_serial(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void gemm_nt_parallel(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n);

// c[m,n] = a[k,m]^T * b[k,n]
template <typename T>
void gemm_tn_serial(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void gemm_tn_parallel(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n);

// Cross-correlation, zero padding. y[n,o,ho,wo], x[n,c,h,w], w[o,c,kh,kw].
template <typename T>
void conv2d_forward_serial(const T* x, const T* w, T* y, int n, int c, int h, int iw,
                           int o, int kh, int kw, int stride, int pad, int ho, int wo);
template <typename T>
void conv2d_forward_parallel(const T* x, const T* w, T* y, int n, int c, int h, int iw,
                             int o, int kh, int kw, int stride, int pad, int ho, int wo);
template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, int n, int c, int h, int iw,
                    int o, int kh, int kw, int stride, int pad, int ho, int wo);

// dx[n,c,h,w] from dy[n,o,ho,wo] and w[o,c,kh,kw].
template <typename T>
void conv2d_backward_input_serial(const T* dy, const T* w, T* dx, int n, int c, int h, int iw,
                                  int o, int kh, int kw, int stride, int pad, int ho, int wo);
template <typename T>
void conv2d_backward_input_parallel(const T* dy, const T* w, T* dx, int n, int c, int h, int iw,
                                    int o, int kh, int kw, int stride, int pad, int ho, int wo);
template <typename T>
void conv2d_backward_input(const T* dy, const T* w, T* dx, int n, int c, int h, int iw,
                           int o, int kh, int kw, int stride, int pad, int ho, int wo);

// dw[o,c,kh,kw] from x[n,c,h,w] and dy[n,o,ho,wo].
template <typename T>
void conv2d_backward_weight_serial(const T* x, const T* dy, T* dw, int n, int c, int h, int iw,
                                   int o, int kh, int kw, int stride, int pad, int ho, int wo);
template <typename T>
void conv2d_backward_weight_parallel(const T* x, const T* dy, T* dw, int n, int c, int h, int iw,
                                     int o, int kh, int kw, int stride, int pad, int ho, int wo);
template <typename T>
void conv2d_backward_weight(const T* x, const T* dy, T* dw, int n, int c, int h, int iw,
                            int o, int kh, int kw, int stride, int pad, int ho, int wo);

}  // namespace ssdg::kernels
