// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor primitives: elementwise arithmetic with trailing-axis
// broadcasting, BLAS-backed matmul, reductions, shape manipulation, and
// log-softmax. Every op is pure with respect to its inputs and records its
// backward rule on the shared tape when any input is tracked.

#pragma once

#include <cblas.h>
#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <vector>

#include "expdate/tensor.hpp"

namespace expdate {
namespace detail {

inline std::vector<std::size_t> row_major_strides(const std::vector<std::size_t>& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

/// Right-aligned broadcast of two shapes; axes of extent 1 (or missing
/// leading axes) stretch to match the other operand.
struct BroadcastPlan {
  std::vector<std::size_t> out_shape;
  std::vector<std::size_t> a_stride, b_stride;  // zero on stretched axes
  std::size_t out_size = 1;
  bool same_shape = false;
  bool b_is_suffix = false;  // out == a.shape and b a contiguous trailing block
  std::size_t b_size = 1;
};

template <class T>
BroadcastPlan broadcast_plan(const Tensor<T>& a, const Tensor<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  std::size_t r = std::max(sa.size(), sb.size());
  BroadcastPlan p;
  p.out_shape.resize(r);
  for (std::size_t k = 0; k < r; ++k) {
    std::size_t ea = k < sa.size() ? sa[sa.size() - 1 - k] : 1;
    std::size_t eb = k < sb.size() ? sb[sb.size() - 1 - k] : 1;
    std::size_t eo;
    if (ea == eb)
      eo = ea;
    else if (ea == 1)
      eo = eb;
    else if (eb == 1)
      eo = ea;
    else
      throw std::invalid_argument(cat("shapes ", shape_str(sa), " and ", shape_str(sb),
                                      " are not broadcast-compatible"));
    p.out_shape[r - 1 - k] = eo;
  }
  auto stretch = [&](const std::vector<std::size_t>& s) {
    auto str = row_major_strides(s);
    std::vector<std::size_t> out(r, 0);
    for (std::size_t k = 0; k < s.size(); ++k) {
      std::size_t ax = r - s.size() + k;
      out[ax] = (s[k] == 1 && p.out_shape[ax] != 1) ? 0 : str[k];
    }
    return out;
  };
  p.a_stride = stretch(sa);
  p.b_stride = stretch(sb);
  p.out_size = shape_size(p.out_shape);
  p.same_shape = sa == sb;
  p.b_size = b.size();
  if (!p.same_shape && p.out_shape == sa && sb.size() <= sa.size()) {
    bool suffix = true;
    for (std::size_t k = 0; k < sb.size(); ++k)
      if (sb[k] != sa[sa.size() - sb.size() + k]) suffix = false;
    p.b_is_suffix = suffix && p.b_size > 0;
  }
  return p;
}

/// Calls f(out_index, a_index, b_index) in row-major output order.
template <class F>
void for_each_pair(const BroadcastPlan& p, F&& f) {
  if (p.same_shape) {
    for (std::size_t i = 0; i < p.out_size; ++i) f(i, i, i);
    return;
  }
  if (p.b_is_suffix) {
    std::size_t i = 0;
    for (std::size_t blk = 0; blk < p.out_size; blk += p.b_size)
      for (std::size_t j = 0; j < p.b_size; ++j, ++i) f(i, i, j);
    return;
  }
  std::size_t r = p.out_shape.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < p.out_size; ++i) {
    f(i, ia, ib);
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      ia += p.a_stride[ax];
      ib += p.b_stride[ax];
      if (idx[ax] < p.out_shape[ax]) break;
      ia -= p.a_stride[ax] * p.out_shape[ax];
      ib -= p.b_stride[ax] * p.out_shape[ax];
      idx[ax] = 0;
    }
  }
}

inline void pin_blas_threads();

inline void gemm(int m, int n, int k, const float* a, const float* b, float* c,
                 bool trans_a = false, bool trans_b = false) {
  pin_blas_threads();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0f, a,
              trans_a ? m : k, b, trans_b ? k : n, 0.0f, c, n);
}

inline void gemm(int m, int n, int k, const double* a, const double* b, double* c,
                 bool trans_a = false, bool trans_b = false) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a,
              trans_a ? m : k, b, trans_b ? k : n, 0.0, c, n);
}

/// BLAS kernels run single-threaded; determinism and outer-loop parallelism
/// are handled by this library, not the backend. Large buffers churn every
/// op, so keep them on the heap instead of round-tripping through mmap.
inline void pin_blas_threads() {
  static const bool done = [] {
    openblas_set_num_threads(1);
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    return true;
  }();
  (void)done;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops

namespace detail {

enum class BinKind { add, sub, mul };

template <class T>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, BinKind kind) {
  BroadcastPlan plan = broadcast_plan(a, b);
  std::vector<T> out(plan.out_size);
  const T* pa = a.data();
  const T* pb = b.data();
  switch (kind) {
    case BinKind::add:
      for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        out[i] = pa[ia] + pb[ib];
      });
      break;
    case BinKind::sub:
      for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        out[i] = pa[ia] - pb[ib];
      });
      break;
    case BinKind::mul:
      for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        out[i] = pa[ia] * pb[ib];
      });
      break;
  }
  Tensor<T> result(plan.out_shape, std::move(out));
  Tape<T>* tape = merged_tape<T>({&a, &b});
  if (!tape) return result;
  int na = a.on_tape() ? a.node() : -1;
  int nb = b.on_tape() ? b.node() : -1;
  Tensor<T> da_src = kind == BinKind::mul ? b.detached() : Tensor<T>();
  Tensor<T> db_src = kind == BinKind::mul ? a.detached() : Tensor<T>();
  auto ashape = a.shape();
  auto bshape = b.shape();
  int node = tape->record([=](const Tensor<T>& up, Gradients<T>& g) {
    const T* pu = up.data();
    if (na >= 0) {
      std::vector<T> da(shape_size(ashape), T(0));
      switch (kind) {
        case BinKind::add:
        case BinKind::sub:
          for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t) {
            da[ia] += pu[i];
          });
          break;
        case BinKind::mul: {
          const T* pbv = da_src.data();
          for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            da[ia] += pu[i] * pbv[ib];
          });
          break;
        }
      }
      g.add(na, da.data(), da.size(), ashape);
    }
    if (nb >= 0) {
      std::vector<T> db(shape_size(bshape), T(0));
      switch (kind) {
        case BinKind::add:
          for_each_pair(plan, [&](std::size_t i, std::size_t, std::size_t ib) {
            db[ib] += pu[i];
          });
          break;
        case BinKind::sub:
          for_each_pair(plan, [&](std::size_t i, std::size_t, std::size_t ib) {
            db[ib] -= pu[i];
          });
          break;
        case BinKind::mul: {
          const T* pav = db_src.data();
          for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            db[ib] += pu[i] * pav[ia];
          });
          break;
        }
      }
      g.add(nb, db.data(), db.size(), bshape);
    }
  });
  return result.attached(tape, node);
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(a, b, detail::BinKind::add);
}
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(a, b, detail::BinKind::sub);
}
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(a, b, detail::BinKind::mul);
}

// ---------------------------------------------------------------------------
// Elementwise unary ops

namespace detail {

/// fwd maps x to y; dfd receives (x, y) and returns dy/dx.
template <class T, class Fwd, class Dfd>
Tensor<T> unary_op(const Tensor<T>& a, Fwd&& fwd, Dfd dfd) {
  std::vector<T> out(a.size());
  const T* pa = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fwd(pa[i]);
  Tensor<T> result(a.shape(), std::move(out));
  if (!a.on_tape()) return result;
  Tape<T>* tape = a.tape();
  int na = a.node();
  Tensor<T> x = a.detached();
  Tensor<T> y = result.detached();
  int node = tape->record([na, x, y, dfd](const Tensor<T>& up, Gradients<T>& g) {
    const T* pu = up.data();
    const T* px = x.data();
    const T* py = y.data();
    std::vector<T> da(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) da[i] = pu[i] * dfd(px[i], py[i]);
    g.add(na, da.data(), da.size(), x.shape());
  });
  return result.attached(tape, node);
}

}  // namespace detail

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary_op(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& a) {
  const T* pa = a.data();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(pa[i] > T(0)))
      throw std::domain_error(detail::cat("log of nonpositive input ", pa[i],
                                          " at flat index ", i));
  return detail::unary_op(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary_op(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary_op(
      a,
      [](T x) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : std::exp(x) / (T(1) + std::exp(x));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary_op(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

/// Clamp to [lo, hi]; gradient passes through inside the closed interval.
template <class T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  return detail::unary_op(
      a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

// Scalar forms.
template <class T>
Tensor<T> add(const Tensor<T>& a, T s) {
  return detail::unary_op(
      a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}
template <class T>
Tensor<T> sub(const Tensor<T>& a, T s) {
  return add(a, -s);
}
template <class T>
Tensor<T> sub(T s, const Tensor<T>& a) {
  return detail::unary_op(
      a, [s](T x) { return s - x; }, [](T, T) { return T(-1); });
}
template <class T>
Tensor<T> mul(const Tensor<T>& a, T s) {
  return detail::unary_op(
      a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}
template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return mul(a, T(-1));
}

// ---------------------------------------------------------------------------
// Matrix multiplication

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::pin_blas_threads();
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0))
    throw std::invalid_argument(detail::cat("matmul shape mismatch: ",
                                            detail::shape_str(a.shape()), " x ",
                                            detail::shape_str(b.shape())));
  std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  std::vector<T> out(m * n, T(0));
  if (m && n && k)
    detail::gemm(static_cast<int>(m), static_cast<int>(n), static_cast<int>(k),
                 a.data(), b.data(), out.data());
  Tensor<T> result({m, n}, std::move(out));
  Tape<T>* tape = detail::merged_tape<T>({&a, &b});
  if (!tape) return result;
  int na = a.on_tape() ? a.node() : -1;
  int nb = b.on_tape() ? b.node() : -1;
  Tensor<T> av = a.detached();
  Tensor<T> bv = b.detached();
  int node = tape->record([=](const Tensor<T>& up, Gradients<T>& g) {
    if (na >= 0) {
      // dA = dC · Bᵀ
      std::vector<T> da(m * k, T(0));
      if (m && k && n)
        detail::gemm(static_cast<int>(m), static_cast<int>(k), static_cast<int>(n),
                     up.data(), bv.data(), da.data(), false, true);
      g.add(na, da.data(), da.size(), av.shape());
    }
    if (nb >= 0) {
      // dB = Aᵀ · dC
      std::vector<T> db(k * n, T(0));
      if (k && n && m)
        detail::gemm(static_cast<int>(k), static_cast<int>(n), static_cast<int>(m),
                     av.data(), up.data(), db.data(), true, false);
      g.add(nb, db.data(), db.size(), bv.shape());
    }
  });
  return result.attached(tape, node);
}

// ---------------------------------------------------------------------------
// Reductions

namespace detail {

enum class RedKind { sum, mean, max };

template <class T>
Tensor<T> reduce_all(const Tensor<T>& a, RedKind kind) {
  if (a.size() == 0) throw std::invalid_argument("reduction over an empty tensor");
  const T* pa = a.data();
  T acc;
  std::size_t arg = 0;
  if (kind == RedKind::max) {
    acc = pa[0];
    for (std::size_t i = 1; i < a.size(); ++i)
      if (pa[i] > acc) acc = pa[i], arg = i;
  } else {
    acc = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) acc += pa[i];
    if (kind == RedKind::mean) acc /= static_cast<T>(a.size());
  }
  Tensor<T> result = Tensor<T>::scalar(acc);
  if (!a.on_tape()) return result;
  Tape<T>* tape = a.tape();
  int na = a.node();
  std::size_t n = a.size();
  auto shape = a.shape();
  int node = tape->record([=](const Tensor<T>& up, Gradients<T>& g) {
    T u = up.data()[0];
    std::vector<T> da(n, T(0));
    if (kind == RedKind::sum)
      std::fill(da.begin(), da.end(), u);
    else if (kind == RedKind::mean)
      std::fill(da.begin(), da.end(), u / static_cast<T>(n));
    else
      da[arg] = u;
    g.add(na, da.data(), n, shape);
  });
  return result.attached(tape, node);
}

template <class T>
Tensor<T> reduce_axis(const Tensor<T>& a, std::size_t axis, RedKind kind) {
  if (axis >= a.rank())
    throw std::invalid_argument(detail::cat("reduction axis ", axis,
                                            " out of range for shape ",
                                            shape_str(a.shape())));
  if (a.extent(axis) == 0)
    throw std::invalid_argument("reduction over an empty axis");
  std::size_t outer = 1, inner = 1, nax = a.extent(axis);
  for (std::size_t i = 0; i < axis; ++i) outer *= a.extent(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.extent(i);
  std::vector<std::size_t> out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (i != axis) out_shape.push_back(a.extent(i));
  const T* pa = a.data();
  std::vector<T> out(outer * inner);
  std::vector<std::size_t> argmax(kind == RedKind::max ? outer * inner : 0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t base = o * nax * inner + in;
      if (kind == RedKind::max) {
        T best = pa[base];
        std::size_t bj = 0;
        for (std::size_t j = 1; j < nax; ++j)
          if (pa[base + j * inner] > best) best = pa[base + j * inner], bj = j;
        out[o * inner + in] = best;
        argmax[o * inner + in] = bj;
      } else {
        T acc = T(0);
        for (std::size_t j = 0; j < nax; ++j) acc += pa[base + j * inner];
        out[o * inner + in] = kind == RedKind::mean ? acc / static_cast<T>(nax) : acc;
      }
    }
  Tensor<T> result(out_shape, std::move(out));
  if (!a.on_tape()) return result;
  Tape<T>* tape = a.tape();
  int na = a.node();
  auto in_shape = a.shape();
  int node = tape->record([=](const Tensor<T>& up, Gradients<T>& g) {
    const T* pu = up.data();
    std::vector<T> da(outer * nax * inner, T(0));
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        T u = pu[o * inner + in];
        std::size_t base = o * nax * inner + in;
        if (kind == RedKind::max)
          da[base + argmax[o * inner + in] * inner] = u;
        else if (kind == RedKind::mean)
          for (std::size_t j = 0; j < nax; ++j) da[base + j * inner] = u / static_cast<T>(nax);
        else
          for (std::size_t j = 0; j < nax; ++j) da[base + j * inner] = u;
      }
    g.add(na, da.data(), da.size(), in_shape);
  });
  return result.attached(tape, node);
}

}  // namespace detail

template <class T>
Tensor<T> reduce_sum(const Tensor<T>& a) {
  return detail::reduce_all(a, detail::RedKind::sum);
}
template <class T>
Tensor<T> reduce_mean(const Tensor<T>& a) {
  return detail::reduce_all(a, detail::RedKind::mean);
}
template <class T>
Tensor<T> reduce_max(const Tensor<T>& a) {
  return detail::reduce_all(a, detail::RedKind::max);
}
template <class T>
Tensor<T> reduce_sum(const Tensor<T>& a, std::size_t axis) {
  return detail::reduce_axis(a, axis, detail::RedKind::sum);
}
template <class T>
Tensor<T> reduce_mean(const Tensor<T>& a, std::size_t axis) {
  return detail::reduce_axis(a, axis, detail::RedKind::mean);
}
template <class T>
Tensor<T> reduce_max(const Tensor<T>& a, std::size_t axis) {
  return detail::reduce_axis(a, axis, detail::RedKind::max);
}

// ---------------------------------------------------------------------------
// Shape manipulation

/// View with identical data and a new shape; gradient reshapes back.
template <class T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<std::size_t> shape) {
  Tensor<T> result = a.detached().reshaped(shape);
  if (!a.on_tape()) return result;
  Tape<T>* tape = a.tape();
  int na = a.node();
  auto in_shape = a.shape();
  int node = tape->record([na, in_shape](const Tensor<T>& up, Gradients<T>& g) {
    g.add(na, up.data(), up.size(), in_shape);
  });
  return result.attached(tape, node);
}

namespace detail {

template <class T>
std::vector<T> permute_copy(const std::vector<std::size_t>& in_shape, const T* src,
                            const std::vector<std::size_t>& perm,
                            std::vector<std::size_t>& out_shape) {
  std::size_t r = in_shape.size();
  out_shape.resize(r);
  auto in_strides = row_major_strides(in_shape);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t k = 0; k < r; ++k) {
    out_shape[k] = in_shape[perm[k]];
    src_stride[k] = in_strides[perm[k]];
  }
  std::size_t n = shape_size(out_shape);
  std::vector<T> out(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = src[s];
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      s += src_stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      s -= src_stride[ax] * out_shape[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

}  // namespace detail

/// Axis permutation: output axis k takes input axis perm[k].
template <class T>
Tensor<T> permute(const Tensor<T>& a, std::vector<std::size_t> perm) {
  if (perm.size() != a.rank())
    throw std::invalid_argument("permute: axis list length must equal rank");
  std::vector<bool> seen(a.rank(), false);
  for (std::size_t p : perm) {
    if (p >= a.rank() || seen[p])
      throw std::invalid_argument("permute: axis list is not a permutation");
    seen[p] = true;
  }
  std::vector<std::size_t> out_shape;
  std::vector<T> out = detail::permute_copy(a.shape(), a.data(), perm, out_shape);
  Tensor<T> result(out_shape, std::move(out));
  if (!a.on_tape()) return result;
  Tape<T>* tape = a.tape();
  int na = a.node();
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = k;
  auto in_shape = a.shape();
  int node = tape->record([na, inv, out_shape, in_shape](const Tensor<T>& up,
                                                         Gradients<T>& g) {
    std::vector<std::size_t> back_shape;
    std::vector<T> da = detail::permute_copy(out_shape, up.data(), inv, back_shape);
    g.add(na, da.data(), da.size(), in_shape);
  });
  return result.attached(tape, node);
}

/// Concatenation along an existing axis.
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  const auto& s0 = parts[0].shape();
  if (axis >= s0.size())
    throw std::invalid_argument(detail::cat("concat axis ", axis,
                                            " out of range for rank ", s0.size()));
  std::size_t total_ax = 0;
  for (const auto& p : parts) {
    if (p.rank() != s0.size())
      throw std::invalid_argument("concat: rank mismatch between parts");
    for (std::size_t i = 0; i < s0.size(); ++i)
      if (i != axis && p.shape()[i] != s0[i])
        throw std::invalid_argument(detail::cat("concat: part shape ",
                                                detail::shape_str(p.shape()),
                                                " incompatible with ",
                                                detail::shape_str(s0)));
    total_ax += p.extent(axis);
  }
  std::vector<std::size_t> out_shape = s0;
  out_shape[axis] = total_ax;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  std::vector<T> out(detail::shape_size(out_shape));
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::size_t chunk = p.extent(axis) * inner;
    const T* ps = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(ps + o * chunk, ps + (o + 1) * chunk,
                out.begin() + static_cast<std::ptrdiff_t>(o * total_ax * inner + off));
    off += chunk;
  }
  Tensor<T> result(out_shape, std::move(out));
  Tape<T>* tape = nullptr;
  for (const auto& p : parts)
    if (p.on_tape()) {
      if (tape && tape != p.tape())
        throw std::logic_error("concat operands belong to different tapes");
      tape = p.tape();
    }
  if (!tape) return result;
  struct PartInfo {
    int node;
    std::size_t chunk;
    std::vector<std::size_t> shape;
  };
  std::vector<PartInfo> infos;
  for (const auto& p : parts)
    infos.push_back({p.on_tape() ? p.node() : -1, p.extent(axis) * inner, p.shape()});
  int node = tape->record([infos, outer, inner, total_ax](const Tensor<T>& up,
                                                          Gradients<T>& g) {
    const T* pu = up.data();
    std::size_t off = 0;
    for (const auto& info : infos) {
      if (info.node >= 0) {
        std::vector<T> da(outer * info.chunk);
        for (std::size_t o = 0; o < outer; ++o)
          std::copy(pu + o * total_ax * inner + off,
                    pu + o * total_ax * inner + off + info.chunk,
                    da.begin() + static_cast<std::ptrdiff_t>(o * info.chunk));
        g.add(info.node, da.data(), da.size(), info.shape);
      }
      off += info.chunk;
    }
  });
  return result.attached(tape, node);
}

/// Hyperrectangle copy: out[i…] = a[offset + i…] with the given extents.
template <class T>
Tensor<T> slice(const Tensor<T>& a, const std::vector<std::size_t>& offsets,
                const std::vector<std::size_t>& extents) {
  if (offsets.size() != a.rank() || extents.size() != a.rank())
    throw std::invalid_argument("slice: offsets/extents must match rank");
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (offsets[i] + extents[i] > a.extent(i))
      throw std::invalid_argument(detail::cat("slice out of bounds on axis ", i,
                                              " for shape ",
                                              detail::shape_str(a.shape())));
  auto strides = detail::row_major_strides(a.shape());
  std::size_t r = a.rank();
  std::size_t n = detail::shape_size(extents);
  std::vector<T> out(n);
  const T* pa = a.data();
  std::size_t base = 0;
  for (std::size_t i = 0; i < r; ++i) base += offsets[i] * strides[i];
  std::vector<std::size_t> idx(r, 0);
  std::size_t s = base;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = pa[s];
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      s += strides[ax];
      if (idx[ax] < extents[ax]) break;
      s -= strides[ax] * extents[ax];
      idx[ax] = 0;
    }
  }
  Tensor<T> result(extents, std::move(out));
  if (!a.on_tape()) return result;
  Tape<T>* tape = a.tape();
  int na = a.node();
  auto in_shape = a.shape();
  int node = tape->record([=](const Tensor<T>& up, Gradients<T>& g) {
    const T* pu = up.data();
    std::vector<T> da(detail::shape_size(in_shape), T(0));
    std::vector<std::size_t> idx(r, 0);
    std::size_t s = base;
    for (std::size_t i = 0; i < n; ++i) {
      da[s] = pu[i];
      for (std::size_t ax = r; ax-- > 0;) {
        ++idx[ax];
        s += strides[ax];
        if (idx[ax] < extents[ax]) break;
        s -= strides[ax] * extents[ax];
        idx[ax] = 0;
      }
    }
    g.add(na, da.data(), da.size(), in_shape);
  });
  return result.attached(tape, node);
}

// ---------------------------------------------------------------------------
// Softmax family

/// Numerically stable log-softmax over the last axis.
template <class T>
Tensor<T> log_softmax(const Tensor<T>& a) {
  if (a.rank() == 0 || a.extent(a.rank() - 1) == 0)
    throw std::invalid_argument("log_softmax requires a nonempty last axis");
  std::size_t c = a.extent(a.rank() - 1);
  std::size_t rows = a.size() / c;
  std::vector<T> out(a.size());
  const T* pa = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = pa + r * c;
    T m = x[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, x[j]);
    T lse = T(0);
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(x[j] - m);
    lse = m + std::log(lse);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = x[j] - lse;
  }
  Tensor<T> result(a.shape(), std::move(out));
  if (!a.on_tape()) return result;
  Tape<T>* tape = a.tape();
  int na = a.node();
  Tensor<T> y = result.detached();
  int node = tape->record([na, y, rows, c](const Tensor<T>& up, Gradients<T>& g) {
    const T* pu = up.data();
    const T* py = y.data();
    std::vector<T> da(y.size());
    for (std::size_t r = 0; r < rows; ++r) {
      T usum = T(0);
      for (std::size_t j = 0; j < c; ++j) usum += pu[r * c + j];
      for (std::size_t j = 0; j < c; ++j)
        da[r * c + j] = pu[r * c + j] - std::exp(py[r * c + j]) * usum;
    }
    g.add(na, da.data(), da.size(), y.shape());
  });
  return result.attached(tape, node);
}

/// Tape-severing identity.
template <class T>
Tensor<T> detach(const Tensor<T>& a) {
  return a.detached();
}

/// Index of the per-row maximum over the last axis (first occurrence on ties).
template <class T>
std::vector<std::size_t> argmax_last(const Tensor<T>& a) {
  if (a.rank() == 0 || a.extent(a.rank() - 1) == 0)
    throw std::invalid_argument("argmax_last requires a nonempty last axis");
  std::size_t c = a.extent(a.rank() - 1);
  std::size_t rows = a.size() / c;
  const T* pa = a.data();
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (pa[r * c + j] > pa[r * c + best]) best = j;
    out[r] = best;
  }
  return out;
}

}  // namespace expdate
