#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

#include "ssdg/kernels.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg::ops {

namespace detail {

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

template <typename T>
void axpy_into_parent(ssdg::detail::TensorNode<T>& parent, const std::vector<T>& g) {
  parent.ensure_grad();
  for (size_t i = 0; i < g.size(); ++i) parent.grad[i] += g[i];
}

}  // namespace detail

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return TensorT<T>::make_op(a.shape(), std::move(out), {a, b},
                             [](ssdg::detail::TensorNode<T>& o) {
                               for (int p = 0; p < 2; ++p)
                                 if (o.parents[p]->requires_grad)
                                   o.parents[p]->accumulate_grad(o.grad.data(), o.grad.size());
                             });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return TensorT<T>::make_op(a.shape(), std::move(out), {a, b},
                             [](ssdg::detail::TensorNode<T>& o) {
                               if (o.parents[0]->requires_grad)
                                 o.parents[0]->accumulate_grad(o.grad.data(), o.grad.size());
                               if (o.parents[1]->requires_grad) {
                                 auto& p = *o.parents[1];
                                 p.ensure_grad();
                                 for (size_t i = 0; i < o.grad.size(); ++i) p.grad[i] -= o.grad[i];
                               }
                             });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return TensorT<T>::make_op(a.shape(), std::move(out), {a, b},
                             [](ssdg::detail::TensorNode<T>& o) {
                               const auto& av = o.parents[0]->data;
                               const auto& bv = o.parents[1]->data;
                               if (o.parents[0]->requires_grad) {
                                 auto& p = *o.parents[0];
                                 p.ensure_grad();
                                 for (size_t i = 0; i < o.grad.size(); ++i)
                                   p.grad[i] += o.grad[i] * bv[i];
                               }
                               if (o.parents[1]->requires_grad) {
                                 auto& p = *o.parents[1];
                                 p.ensure_grad();
                                 for (size_t i = 0; i < o.grad.size(); ++i)
                                   p.grad[i] += o.grad[i] * av[i];
                               }
                             });
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T c) {
  std::vector<T> out(a.numel());
  const auto ad = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * c;
  return TensorT<T>::make_op(a.shape(), std::move(out), {a},
                             [c](ssdg::detail::TensorNode<T>& o) {
                               if (!o.parents[0]->requires_grad) return;
                               auto& p = *o.parents[0];
                               p.ensure_grad();
                               for (size_t i = 0; i < o.grad.size(); ++i)
                                 p.grad[i] += o.grad[i] * c;
                             });
}

template <typename T>
TensorT<T> abs(const TensorT<T>& a) {
  std::vector<T> out(a.numel());
  const auto ad = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] < T(0) ? -ad[i] : ad[i];
  return TensorT<T>::make_op(a.shape(), std::move(out), {a},
                             [](ssdg::detail::TensorNode<T>& o) {
                               if (!o.parents[0]->requires_grad) return;
                               auto& p = *o.parents[0];
                               p.ensure_grad();
                               for (size_t i = 0; i < o.grad.size(); ++i) {
                                 const T x = p.data[i];
                                 // subgradient 0 at the kink
                                 p.grad[i] += o.grad[i] * (x > T(0) ? T(1) : x < T(0) ? T(-1) : T(0));
                               }
                             });
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
  std::vector<T> out(a.numel());
  const auto ad = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] > T(0) ? ad[i] : T(0);
  return TensorT<T>::make_op(a.shape(), std::move(out), {a},
                             [](ssdg::detail::TensorNode<T>& o) {
                               if (!o.parents[0]->requires_grad) return;
                               auto& p = *o.parents[0];
                               p.ensure_grad();
                               for (size_t i = 0; i < o.grad.size(); ++i)
                                 if (p.data[i] > T(0)) p.grad[i] += o.grad[i];
                             });
}

// a[m,k] * b[k,n] -> [m,n]
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<size_t>(m) * n);
  kernels::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return TensorT<T>::make_op(
      {m, n}, std::move(out), {a, b}, [m, k, n](ssdg::detail::TensorNode<T>& o) {
        if (o.parents[0]->requires_grad) {
          std::vector<T> da(static_cast<size_t>(m) * k);
          kernels::gemm_nt(o.grad.data(), o.parents[1]->data.data(), da.data(), m, n, k);
          detail::axpy_into_parent(*o.parents[0], da);
        }
        if (o.parents[1]->requires_grad) {
          std::vector<T> db(static_cast<size_t>(k) * n);
          kernels::gemm_tn(o.parents[0]->data.data(), o.grad.data(), db.data(), k, m, n);
          detail::axpy_into_parent(*o.parents[1], db);
        }
      });
}

// x[n,d] + b[d] broadcast over rows.
template <typename T>
TensorT<T> add_rowvec(const TensorT<T>& x, const TensorT<T>& b) {
  if (x.shape().size() != 2 || b.shape().size() != 1 || x.dim(1) != b.dim(0))
    throw std::invalid_argument("add_rowvec: incompatible shapes " + shape_str(x.shape()) +
                                " and " + shape_str(b.shape()));
  const int n = x.dim(0), d = x.dim(1);
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  const auto bd = b.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out[static_cast<size_t>(i) * d + j] = xd[static_cast<size_t>(i) * d + j] + bd[j];
  return TensorT<T>::make_op({n, d}, std::move(out), {x, b},
                             [n, d](ssdg::detail::TensorNode<T>& o) {
                               if (o.parents[0]->requires_grad)
                                 o.parents[0]->accumulate_grad(o.grad.data(), o.grad.size());
                               if (o.parents[1]->requires_grad) {
                                 auto& p = *o.parents[1];
                                 p.ensure_grad();
                                 for (int i = 0; i < n; ++i)
                                   for (int j = 0; j < d; ++j)
                                     p.grad[j] += o.grad[static_cast<size_t>(i) * d + j];
                               }
                             });
}

// x[n,c,h,w] + b[c] broadcast over batch and space.
template <typename T>
TensorT<T> add_channel_bias(const TensorT<T>& x, const TensorT<T>& b) {
  if (x.shape().size() != 4 || b.shape().size() != 1 || x.dim(1) != b.dim(0))
    throw std::invalid_argument("add_channel_bias: incompatible shapes " + shape_str(x.shape()) +
                                " and " + shape_str(b.shape()));
  const int n = x.dim(0), c = x.dim(1);
  const size_t hw = static_cast<size_t>(x.dim(2)) * x.dim(3);
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  const auto bd = b.data();
  size_t idx = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const T bj = bd[j];
      for (size_t s = 0; s < hw; ++s, ++idx) out[idx] = xd[idx] + bj;
    }
  return TensorT<T>::make_op(x.shape(), std::move(out), {x, b},
                             [n, c, hw](ssdg::detail::TensorNode<T>& o) {
                               if (o.parents[0]->requires_grad)
                                 o.parents[0]->accumulate_grad(o.grad.data(), o.grad.size());
                               if (o.parents[1]->requires_grad) {
                                 auto& p = *o.parents[1];
                                 p.ensure_grad();
                                 size_t idx = 0;
                                 for (int i = 0; i < n; ++i)
                                   for (int j = 0; j < c; ++j)
                                     for (size_t s = 0; s < hw; ++s, ++idx)
                                       p.grad[j] += o.grad[idx];
                               }
                             });
}

// Cross-correlation with zero padding; output H' = floor((H+2p-kh)/stride)+1.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, int stride, int padding) {
  if (x.shape().size() != 4 || w.shape().size() != 4 || x.dim(1) != w.dim(1))
    throw std::invalid_argument("conv2d: incompatible shapes " + shape_str(x.shape()) + " and " +
                                shape_str(w.shape()));
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be non-negative");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), iw = x.dim(3);
  const int o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (kh > h + 2 * padding || kw > iw + 2 * padding)
    throw std::invalid_argument("conv2d: kernel " + shape_str(w.shape()) +
                                " larger than padded input " + shape_str(x.shape()));
  const int ho = (h + 2 * padding - kh) / stride + 1;
  const int wo = (iw + 2 * padding - kw) / stride + 1;
  if (ho <= 0 || wo <= 0)
    throw std::invalid_argument("conv2d: non-positive output size for input " +
                                shape_str(x.shape()) + " kernel " + shape_str(w.shape()));
  std::vector<T> out(static_cast<size_t>(n) * o * ho * wo);
  kernels::conv2d_forward(x.data().data(), w.data().data(), out.data(), n, c, h, iw, o, kh, kw,
                          stride, padding, ho, wo);
  return TensorT<T>::make_op(
      {n, o, ho, wo}, std::move(out), {x, w},
      [n, c, h, iw, o, kh, kw, stride, padding, ho, wo](ssdg::detail::TensorNode<T>& out_node) {
        if (out_node.parents[0]->requires_grad) {
          std::vector<T> dx(out_node.parents[0]->data.size());
          kernels::conv2d_backward_input(out_node.grad.data(), out_node.parents[1]->data.data(),
                                         dx.data(), n, c, h, iw, o, kh, kw, stride, padding, ho,
                                         wo);
          detail::axpy_into_parent(*out_node.parents[0], dx);
        }
        if (out_node.parents[1]->requires_grad) {
          std::vector<T> dw(out_node.parents[1]->data.size());
          kernels::conv2d_backward_weight(out_node.parents[0]->data.data(), out_node.grad.data(),
                                          dw.data(), n, c, h, iw, o, kh, kw, stride, padding, ho,
                                          wo);
          detail::axpy_into_parent(*out_node.parents[1], dw);
        }
      });
}

// [n,c,h,w] -> [n,c] spatial mean.
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
  if (x.shape().size() != 4)
    throw std::invalid_argument("global_avg_pool: expected 4-d input, got " +
                                shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  const size_t hw = static_cast<size_t>(x.dim(2)) * x.dim(3);
  std::vector<T> out(static_cast<size_t>(n) * c);
  const auto xd = x.data();
  for (size_t nc = 0; nc < out.size(); ++nc) {
    T acc = T(0);
    const T* p = xd.data() + nc * hw;
    for (size_t s = 0; s < hw; ++s) acc += p[s];
    out[nc] = acc / static_cast<T>(hw);
  }
  return TensorT<T>::make_op({n, c}, std::move(out), {x},
                             [hw](ssdg::detail::TensorNode<T>& o) {
                               if (!o.parents[0]->requires_grad) return;
                               auto& p = *o.parents[0];
                               p.ensure_grad();
                               const T inv = T(1) / static_cast<T>(hw);
                               for (size_t nc = 0; nc < o.grad.size(); ++nc) {
                                 const T g = o.grad[nc] * inv;
                                 T* dst = p.grad.data() + nc * hw;
                                 for (size_t s = 0; s < hw; ++s) dst[s] += g;
                               }
                             });
}

// Row-wise softmax of [n,k], max-subtracted for stability.
template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& z) {
  if (z.shape().size() != 2)
    throw std::invalid_argument("softmax_rows: expected 2-d input, got " + shape_str(z.shape()));
  const int n = z.dim(0), k = z.dim(1);
  std::vector<T> out(z.numel());
  const auto zd = z.data();
  for (int i = 0; i < n; ++i) {
    const T* row = zd.data() + static_cast<size_t>(i) * k;
    T* orow = out.data() + static_cast<size_t>(i) * k;
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int j = 0; j < k; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int j = 0; j < k; ++j) orow[j] /= sum;
  }
  return TensorT<T>::make_op({n, k}, std::move(out), {z},
                             [n, k](ssdg::detail::TensorNode<T>& o) {
                               if (!o.parents[0]->requires_grad) return;
                               auto& p = *o.parents[0];
                               p.ensure_grad();
                               for (int i = 0; i < n; ++i) {
                                 const T* prob = o.data.data() + static_cast<size_t>(i) * k;
                                 const T* g = o.grad.data() + static_cast<size_t>(i) * k;
                                 T dot = T(0);
                                 for (int j = 0; j < k; ++j) dot += g[j] * prob[j];
                                 T* dst = p.grad.data() + static_cast<size_t>(i) * k;
                                 for (int j = 0; j < k; ++j) dst[j] += prob[j] * (g[j] - dot);
                               }
                             });
}

// Elementwise x*log(x) with 0*log(0) = 0; input clamped below at 1e-12 inside
// the log so that the entropy losses stay finite in float.
template <typename T>
TensorT<T> xlogx(const TensorT<T>& x) {
  const T tiny = T(1e-12);
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (size_t i = 0; i < out.size(); ++i) {
    const T v = xd[i];
    out[i] = v <= tiny ? T(0) : v * std::log(v);
  }
  return TensorT<T>::make_op(x.shape(), std::move(out), {x},
                             [tiny](ssdg::detail::TensorNode<T>& o) {
                               if (!o.parents[0]->requires_grad) return;
                               auto& p = *o.parents[0];
                               p.ensure_grad();
                               for (size_t i = 0; i < o.grad.size(); ++i) {
                                 const T v = std::max(p.data[i], tiny);
                                 p.grad[i] += o.grad[i] * (std::log(v) + T(1));
                               }
                             });
}

template <typename T>
TensorT<T> sum_all(const TensorT<T>& x) {
  T acc = T(0);
  for (const T v : x.data()) acc += v;
  return TensorT<T>::make_op({1}, {acc}, {x},
                             [](ssdg::detail::TensorNode<T>& o) {
                               if (!o.parents[0]->requires_grad) return;
                               auto& p = *o.parents[0];
                               p.ensure_grad();
                               const T g = o.grad[0];
                               for (auto& gv : p.grad) gv += g;
                             });
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& x) {
  return scale(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

// Column means of [n,k] -> [k].
template <typename T>
TensorT<T> mean_rows(const TensorT<T>& x) {
  if (x.shape().size() != 2)
    throw std::invalid_argument("mean_rows: expected 2-d input, got " + shape_str(x.shape()));
  const int n = x.dim(0), k = x.dim(1);
  std::vector<T> out(static_cast<size_t>(k), T(0));
  const auto xd = x.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) out[j] += xd[static_cast<size_t>(i) * k + j];
  for (int j = 0; j < k; ++j) out[j] /= static_cast<T>(n);
  return TensorT<T>::make_op({k}, std::move(out), {x},
                             [n, k](ssdg::detail::TensorNode<T>& o) {
                               if (!o.parents[0]->requires_grad) return;
                               auto& p = *o.parents[0];
                               p.ensure_grad();
                               const T inv = T(1) / static_cast<T>(n);
                               for (int i = 0; i < n; ++i)
                                 for (int j = 0; j < k; ++j)
                                   p.grad[static_cast<size_t>(i) * k + j] += o.grad[j] * inv;
                             });
}

// Rows (axis-0 slices) of x gathered by index; gradient scatters back.
template <typename T>
TensorT<T> index_select0(const TensorT<T>& x, std::vector<int> indices) {
  if (x.shape().empty())
    throw std::invalid_argument("index_select0: scalar input");
  const int n0 = x.dim(0);
  const size_t rsz = x.numel() / static_cast<size_t>(n0 == 0 ? 1 : n0);
  for (const int idx : indices)
    if (idx < 0 || idx >= n0)
      throw std::out_of_range("index_select0: index " + std::to_string(idx) +
                              " out of range for axis size " + std::to_string(n0));
  std::vector<int> oshape = x.shape();
  oshape[0] = static_cast<int>(indices.size());
  std::vector<T> out(rsz * indices.size());
  const auto xd = x.data();
  for (size_t i = 0; i < indices.size(); ++i)
    std::copy_n(xd.data() + static_cast<size_t>(indices[i]) * rsz, rsz, out.data() + i * rsz);
  return TensorT<T>::make_op(std::move(oshape), std::move(out), {x},
                             [indices = std::move(indices), rsz](ssdg::detail::TensorNode<T>& o) {
                               if (!o.parents[0]->requires_grad) return;
                               auto& p = *o.parents[0];
                               p.ensure_grad();
                               for (size_t i = 0; i < indices.size(); ++i) {
                                 const T* g = o.grad.data() + i * rsz;
                                 T* dst = p.grad.data() + static_cast<size_t>(indices[i]) * rsz;
                                 for (size_t s = 0; s < rsz; ++s) dst[s] += g[s];
                               }
                             });
}

// Concatenate along axis 0; trailing dims must agree.
template <typename T>
TensorT<T> concat0(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape().size() != b.shape().size() || a.shape().empty())
    throw std::invalid_argument("concat0: rank mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  for (size_t i = 1; i < a.shape().size(); ++i)
    if (a.shape()[i] != b.shape()[i])
      throw std::invalid_argument("concat0: trailing shape mismatch " + shape_str(a.shape()) +
                                  " vs " + shape_str(b.shape()));
  std::vector<int> oshape = a.shape();
  oshape[0] += b.dim(0);
  std::vector<T> out(a.numel() + b.numel());
  std::copy_n(a.data().data(), a.numel(), out.data());
  std::copy_n(b.data().data(), b.numel(), out.data() + a.numel());
  const size_t asz = a.numel();
  return TensorT<T>::make_op(std::move(oshape), std::move(out), {a, b},
                             [asz](ssdg::detail::TensorNode<T>& o) {
                               if (o.parents[0]->requires_grad)
                                 o.parents[0]->accumulate_grad(o.grad.data(), asz);
                               if (o.parents[1]->requires_grad)
                                 o.parents[1]->accumulate_grad(o.grad.data() + asz,
                                                               o.grad.size() - asz);
                             });
}

// Per-(sample,channel) affine y = x*scale + shift with constant coefficients;
// the style confusor lowers to this once its statistics are detached.
template <typename T>
TensorT<T> channel_affine(const TensorT<T>& x, std::vector<T> scl, std::vector<T> shift) {
  if (x.shape().size() != 4)
    throw std::invalid_argument("channel_affine: expected 4-d input, got " +
                                shape_str(x.shape()));
  const size_t nc = static_cast<size_t>(x.dim(0)) * x.dim(1);
  const size_t hw = static_cast<size_t>(x.dim(2)) * x.dim(3);
  if (scl.size() != nc || shift.size() != nc)
    throw std::invalid_argument("channel_affine: coefficient length mismatch");
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  for (size_t i = 0; i < nc; ++i) {
    const T s = scl[i], t = shift[i];
    const T* src = xd.data() + i * hw;
    T* dst = out.data() + i * hw;
    for (size_t j = 0; j < hw; ++j) dst[j] = src[j] * s + t;
  }
  return TensorT<T>::make_op(x.shape(), std::move(out), {x},
                             [scl = std::move(scl), hw](ssdg::detail::TensorNode<T>& o) {
                               if (!o.parents[0]->requires_grad) return;
                               auto& p = *o.parents[0];
                               p.ensure_grad();
                               for (size_t i = 0; i < scl.size(); ++i) {
                                 const T s = scl[i];
                                 const T* g = o.grad.data() + i * hw;
                                 T* dst = p.grad.data() + i * hw;
                                 for (size_t j = 0; j < hw; ++j) dst[j] += g[j] * s;
                               }
                             });
}

// Mean over the batch of -log softmax(logits)[target].
template <typename T>
TensorT<T> softmax_cross_entropy(const TensorT<T>& logits, const std::vector<int>& targets) {
  if (logits.shape().size() != 2)
    throw std::invalid_argument("softmax_cross_entropy: expected 2-d logits, got " +
                                shape_str(logits.shape()));
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(targets.size()) != n)
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(n) + " rows");
  for (const int t : targets)
    if (t < 0 || t >= k)
      throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(t) +
                              " out of range [0," + std::to_string(k) + ")");
  std::vector<T> probs(logits.numel());
  const auto zd = logits.data();
  T loss = T(0);
  for (int i = 0; i < n; ++i) {
    const T* row = zd.data() + static_cast<size_t>(i) * k;
    T* prow = probs.data() + static_cast<size_t>(i) * k;
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int j = 0; j < k; ++j) {
      prow[j] = std::exp(row[j] - mx);
      sum += prow[j];
    }
    const T logsum = std::log(sum);
    for (int j = 0; j < k; ++j) prow[j] /= sum;
    loss += -(row[targets[static_cast<size_t>(i)]] - mx - logsum);
  }
  loss /= static_cast<T>(n);
  return TensorT<T>::make_op(
      {1}, {loss}, {logits},
      [probs = std::move(probs), targets, n, k](ssdg::detail::TensorNode<T>& o) {
        if (!o.parents[0]->requires_grad) return;
        auto& p = *o.parents[0];
        p.ensure_grad();
        const T g = o.grad[0] / static_cast<T>(n);
        for (int i = 0; i < n; ++i) {
          const T* prow = probs.data() + static_cast<size_t>(i) * k;
          T* dst = p.grad.data() + static_cast<size_t>(i) * k;
          for (int j = 0; j < k; ++j)
            dst[j] += g * (prow[j] - (j == targets[static_cast<size_t>(i)] ? T(1) : T(0)));
        }
      });
}

// Full-distribution cross entropy: mean over batch of -sum_k t_k log p_k.
// Targets are constants (soft labels from the intermediate domain).
template <typename T>
TensorT<T> softmax_cross_entropy_soft(const TensorT<T>& logits, const std::vector<T>& targets) {
  if (logits.shape().size() != 2)
    throw std::invalid_argument("softmax_cross_entropy_soft: expected 2-d logits, got " +
                                shape_str(logits.shape()));
  const int n = logits.dim(0), k = logits.dim(1);
  if (targets.size() != logits.numel())
    throw std::invalid_argument("softmax_cross_entropy_soft: target length mismatch");
  std::vector<T> probs(logits.numel());
  const auto zd = logits.data();
  T loss = T(0);
  for (int i = 0; i < n; ++i) {
    const T* row = zd.data() + static_cast<size_t>(i) * k;
    const T* trow = targets.data() + static_cast<size_t>(i) * k;
    T* prow = probs.data() + static_cast<size_t>(i) * k;
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int j = 0; j < k; ++j) {
      prow[j] = std::exp(row[j] - mx);
      sum += prow[j];
    }
    const T logsum = std::log(sum);
    for (int j = 0; j < k; ++j) {
      loss += -trow[j] * (row[j] - mx - logsum);
      prow[j] /= sum;
    }
  }
  loss /= static_cast<T>(n);
  return TensorT<T>::make_op(
      {1}, {loss}, {logits},
      [probs = std::move(probs), targets, n, k](ssdg::detail::TensorNode<T>& o) {
        if (!o.parents[0]->requires_grad) return;
        auto& p = *o.parents[0];
        p.ensure_grad();
        const T g = o.grad[0] / static_cast<T>(n);
        for (size_t i = 0; i < o.parents[0]->data.size(); ++i)
          p.grad[i] += g * (probs[i] - targets[i]);
      });
}

// Per-sample, per-channel spatial mean and population std of [n,c,h,w].
// Both outputs are detached from the graph.
template <typename T>
std::pair<TensorT<T>, TensorT<T>> channel_stats(const TensorT<T>& x) {
  if (x.shape().size() != 4)
    throw std::invalid_argument("channel_stats: expected 4-d input, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  const size_t hw = static_cast<size_t>(x.dim(2)) * x.dim(3);
  if (hw == 0) throw std::invalid_argument("channel_stats: empty spatial extent");
  std::vector<T> mu(static_cast<size_t>(n) * c), sigma(static_cast<size_t>(n) * c);
  const auto xd = x.data();
  for (size_t nc = 0; nc < mu.size(); ++nc) {
    const T* p = xd.data() + nc * hw;
    T m = T(0);
    for (size_t s = 0; s < hw; ++s) m += p[s];
    m /= static_cast<T>(hw);
    T var = T(0);
    for (size_t s = 0; s < hw; ++s) {
      const T d = p[s] - m;
      var += d * d;
    }
    var /= static_cast<T>(hw);
    mu[nc] = m;
    sigma[nc] = std::sqrt(var);
  }
  return {TensorT<T>::from_data({n, c}, std::move(mu)),
          TensorT<T>::from_data({n, c}, std::move(sigma))};
}

// Detached per-sample cross entropy, used by the small-loss selections.
template <typename T>
std::vector<T> per_sample_cross_entropy(const TensorT<T>& logits, const std::vector<int>& targets) {
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(targets.size()) != n)
    throw std::invalid_argument("per_sample_cross_entropy: target count mismatch");
  std::vector<T> out(static_cast<size_t>(n));
  const auto zd = logits.data();
  for (int i = 0; i < n; ++i) {
    const T* row = zd.data() + static_cast<size_t>(i) * k;
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    out[static_cast<size_t>(i)] = -(row[targets[static_cast<size_t>(i)]] - mx - std::log(sum));
  }
  return out;
}

// Row argmax with ties broken toward the lower class id.
template <typename T>
int argmax_row(const T* row, int k) {
  int best = 0;
  for (int j = 1; j < k; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

}  // namespace ssdg::ops
