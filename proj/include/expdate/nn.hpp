// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// Neural-network layers built on the tensor core: conv2d and its transpose
// (custom im2col/col2im kernels with hand-written backward rules), maxpool,
// batch normalization, dense, dropout, and (bidirectional) LSTM composed from
// differentiable primitives.
//
// Image tensors are (batch, height, width, channels), row-major.
// conv2d weights are (kh, kw, in_channels, out_channels); conv2d_transpose
// weights are (kh, kw, out_channels, in_channels), so a transpose convolution
// is the exact adjoint of the convolution sharing the same buffer.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "expdate/ops.hpp"
#include "expdate/tensor.hpp"

namespace expdate {

enum class Padding { same, valid };
enum class RunMode { train, infer };

struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kh = 3, kw = 3;
  std::size_t sh = 1, sw = 1;
  Padding padding = Padding::same;
};

struct LstmSpec {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  bool bidirectional = false;
  bool return_sequences = true;
};

inline std::size_t conv_param_count(const ConvSpec& s) {
  return s.kh * s.kw * s.in_channels * s.out_channels + s.out_channels;
}

inline std::size_t dense_param_count(std::size_t n, std::size_t m) { return n * m + m; }

inline std::size_t lstm_param_count(const LstmSpec& s) {
  std::size_t per_dir =
      4 * ((s.input_size + s.hidden_size) * s.hidden_size + s.hidden_size);
  return s.bidirectional ? 2 * per_dir : per_dir;
}

inline std::size_t batchnorm_state_count(std::size_t channels) { return 4 * channels; }
inline std::size_t batchnorm_trainable_count(std::size_t channels) { return 2 * channels; }

namespace detail {

inline std::size_t conv_out_extent(std::size_t n, std::size_t k, std::size_t s,
                                   Padding p) {
  if (s == 0) throw std::invalid_argument("convolution stride must be positive");
  if (p == Padding::same) return (n + s - 1) / s;
  if (n < k) throw std::invalid_argument("valid padding requires input >= kernel");
  return (n - k) / s + 1;
}

inline std::size_t pad_before(std::size_t n, std::size_t k, std::size_t s,
                              std::size_t out, Padding p) {
  if (p == Padding::valid) return 0;
  std::size_t covered = (out - 1) * s + k;
  return covered > n ? (covered - n) / 2 : 0;
}

/// Window geometry shared by conv2d, conv2d_transpose, and their backward
/// passes. (h, w, c) is the dense side the patches are gathered from; (ho,
/// wo) the window grid.
struct ConvGeom {
  std::size_t b, h, w, c;
  std::size_t kh, kw, sh, sw;
  std::size_t ho, wo;
  std::size_t pad_t, pad_l;
  std::size_t rows() const { return b * ho * wo; }
  std::size_t cols() const { return kh * kw * c; }
};

template <class T>
std::vector<T> im2col(const T* x, const ConvGeom& g) {
  std::vector<T> col(g.rows() * g.cols(), T(0));
  const std::size_t K = g.cols();
  const auto H = static_cast<std::ptrdiff_t>(g.h);
  const auto W = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t bi = 0; bi < g.b; ++bi)
    for (std::size_t oi = 0; oi < g.ho; ++oi)
      for (std::size_t oj = 0; oj < g.wo; ++oj) {
        T* row = col.data() + ((bi * g.ho + oi) * g.wo + oj) * K;
        std::ptrdiff_t wi0 = static_cast<std::ptrdiff_t>(oj * g.sw) -
                             static_cast<std::ptrdiff_t>(g.pad_l);
        // The kj range reads kw·c contiguous values; one copy when the whole
        // window row is inside the image.
        bool full = wi0 >= 0 && wi0 + static_cast<std::ptrdiff_t>(g.kw) <= W;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
          std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(oi * g.sh + ki) -
                              static_cast<std::ptrdiff_t>(g.pad_t);
          if (hi < 0 || hi >= H) continue;
          const T* xrow =
              x + (bi * g.h + static_cast<std::size_t>(hi)) * g.w * g.c;
          if (full) {
            const T* src = xrow + static_cast<std::size_t>(wi0) * g.c;
            std::copy(src, src + g.kw * g.c, row + ki * g.kw * g.c);
            continue;
          }
          for (std::size_t kj = 0; kj < g.kw; ++kj) {
            std::ptrdiff_t wi = wi0 + static_cast<std::ptrdiff_t>(kj);
            if (wi < 0 || wi >= W) continue;
            const T* src = xrow + static_cast<std::size_t>(wi) * g.c;
            std::copy(src, src + g.c, row + (ki * g.kw + kj) * g.c);
          }
        }
      }
  return col;
}

template <class T>
void col2im(const T* col, const ConvGeom& g, T* x) {
  const std::size_t K = g.cols();
  const auto H = static_cast<std::ptrdiff_t>(g.h);
  const auto W = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t bi = 0; bi < g.b; ++bi)
    for (std::size_t oi = 0; oi < g.ho; ++oi)
      for (std::size_t oj = 0; oj < g.wo; ++oj) {
        const T* row = col + ((bi * g.ho + oi) * g.wo + oj) * K;
        std::ptrdiff_t wi0 = static_cast<std::ptrdiff_t>(oj * g.sw) -
                             static_cast<std::ptrdiff_t>(g.pad_l);
        bool full = wi0 >= 0 && wi0 + static_cast<std::ptrdiff_t>(g.kw) <= W;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
          std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(oi * g.sh + ki) -
                              static_cast<std::ptrdiff_t>(g.pad_t);
          if (hi < 0 || hi >= H) continue;
          T* xrow = x + (bi * g.h + static_cast<std::size_t>(hi)) * g.w * g.c;
          if (full) {
            T* dst = xrow + static_cast<std::size_t>(wi0) * g.c;
            const T* src = row + ki * g.kw * g.c;
            for (std::size_t q = 0; q < g.kw * g.c; ++q) dst[q] += src[q];
            continue;
          }
          for (std::size_t kj = 0; kj < g.kw; ++kj) {
            std::ptrdiff_t wi = wi0 + static_cast<std::ptrdiff_t>(kj);
            if (wi < 0 || wi >= W) continue;
            T* dst = xrow + static_cast<std::size_t>(wi) * g.c;
            const T* src = row + (ki * g.kw + kj) * g.c;
            for (std::size_t ch = 0; ch < g.c; ++ch) dst[ch] += src[ch];
          }
        }
      }
}

template <class T>
struct Rank4 {
  Tensor<T> t;       // always rank 4
  bool had_batch;    // caller passed (b,h,w,c) rather than (h,w,c)
};

template <class T>
Rank4<T> as_rank4(const Tensor<T>& x, const char* op) {
  if (x.rank() == 4) return {x, true};
  if (x.rank() == 3)
    return {reshape(x, {std::size_t(1), x.extent(0), x.extent(1), x.extent(2)}), false};
  throw std::invalid_argument(cat(op, ": expected rank-3 (h,w,c) or rank-4 (b,h,w,c) input, got ",
                                  shape_str(x.shape())));
}

template <class T>
Tensor<T> restore_rank(Tensor<T> y, bool had_batch) {
  if (had_batch) return y;
  return reshape(y, {y.extent(1), y.extent(2), y.extent(3)});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d

template <class T>
Tensor<T> conv2d(const Tensor<T>& x_in, const ConvSpec& spec, const Tensor<T>& weights,
                 const Tensor<T>& bias) {
  detail::pin_blas_threads();
  auto [x, had_batch] = detail::as_rank4(x_in, "conv2d");
  if (x.extent(3) != spec.in_channels)
    throw std::invalid_argument(detail::cat("conv2d: input has ", x.extent(3),
                                            " channels, spec expects ",
                                            spec.in_channels));
  std::vector<std::size_t> wshape{spec.kh, spec.kw, spec.in_channels,
                                  spec.out_channels};
  if (weights.shape() != wshape)
    throw std::invalid_argument(detail::cat("conv2d: weights shape ",
                                            detail::shape_str(weights.shape()),
                                            " does not match spec ",
                                            detail::shape_str(wshape)));
  if (bias.shape() != std::vector<std::size_t>{spec.out_channels})
    throw std::invalid_argument("conv2d: bias shape must be (out_channels)");

  detail::ConvGeom g;
  g.b = x.extent(0);
  g.h = x.extent(1);
  g.w = x.extent(2);
  g.c = spec.in_channels;
  g.kh = spec.kh;
  g.kw = spec.kw;
  g.sh = spec.sh;
  g.sw = spec.sw;
  g.ho = detail::conv_out_extent(g.h, g.kh, g.sh, spec.padding);
  g.wo = detail::conv_out_extent(g.w, g.kw, g.sw, spec.padding);
  g.pad_t = detail::pad_before(g.h, g.kh, g.sh, g.ho, spec.padding);
  g.pad_l = detail::pad_before(g.w, g.kw, g.sw, g.wo, spec.padding);

  const std::size_t R = g.rows(), K = g.cols(), co = spec.out_channels;
  std::vector<T> col = detail::im2col(x.data(), g);
  std::vector<T> out(R * co, T(0));
  if (R && K && co)
    detail::gemm(static_cast<int>(R), static_cast<int>(co), static_cast<int>(K),
                 col.data(), weights.data(), out.data());
  const T* pb = bias.data();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t ch = 0; ch < co; ++ch) out[r * co + ch] += pb[ch];
  Tensor<T> result({g.b, g.ho, g.wo, co}, std::move(out));

  Tape<T>* tape = detail::merged_tape<T>({&x, &weights, &bias});
  if (tape) {
    int nx = x.on_tape() ? x.node() : -1;
    int nw = weights.on_tape() ? weights.node() : -1;
    int nb = bias.on_tape() ? bias.node() : -1;
    Tensor<T> xv = x.detached();
    Tensor<T> wv = weights.detached();
    int node = tape->record([=](const Tensor<T>& up, Gradients<T>& grads) {
      const T* pu = up.data();
      if (nb >= 0) {
        std::vector<T> db(co, T(0));
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t ch = 0; ch < co; ++ch) db[ch] += pu[r * co + ch];
        grads.add(nb, db.data(), co, {co});
      }
      if (nw >= 0) {
        std::vector<T> colb = detail::im2col(xv.data(), g);
        std::vector<T> dw(K * co, T(0));
        if (R && K && co)
          detail::gemm(static_cast<int>(K), static_cast<int>(co),
                       static_cast<int>(R), colb.data(), pu, dw.data(), true, false);
        grads.add(nw, dw.data(), dw.size(), wshape);
      }
      if (nx >= 0) {
        std::vector<T> dcol(R * K, T(0));
        if (R && K && co)
          detail::gemm(static_cast<int>(R), static_cast<int>(K),
                       static_cast<int>(co), pu, wv.data(), dcol.data(), false, true);
        std::vector<T> dx(xv.size(), T(0));
        detail::col2im(dcol.data(), g, dx.data());
        grads.add(nx, dx.data(), dx.size(), xv.shape());
      }
    });
    result = result.attached(tape, node);
  }
  return detail::restore_rank(result, had_batch);
}

// ---------------------------------------------------------------------------
// conv2d_transpose

template <class T>
Tensor<T> conv2d_transpose(const Tensor<T>& x_in, const ConvSpec& spec,
                           const Tensor<T>& weights, const Tensor<T>& bias) {
  detail::pin_blas_threads();
  auto [x, had_batch] = detail::as_rank4(x_in, "conv2d_transpose");
  if (x.extent(3) != spec.in_channels)
    throw std::invalid_argument(detail::cat("conv2d_transpose: input has ", x.extent(3),
                                            " channels, spec expects ",
                                            spec.in_channels));
  std::vector<std::size_t> wshape{spec.kh, spec.kw, spec.out_channels,
                                  spec.in_channels};
  if (weights.shape() != wshape)
    throw std::invalid_argument(detail::cat("conv2d_transpose: weights shape ",
                                            detail::shape_str(weights.shape()),
                                            " does not match spec ",
                                            detail::shape_str(wshape)));
  if (bias.shape() != std::vector<std::size_t>{spec.out_channels})
    throw std::invalid_argument("conv2d_transpose: bias shape must be (out_channels)");

  std::size_t b = x.extent(0), h = x.extent(1), w = x.extent(2);
  std::size_t H, W;
  if (spec.padding == Padding::same) {
    H = h * spec.sh;
    W = w * spec.sw;
  } else {
    H = (h - 1) * spec.sh + spec.kh;
    W = (w - 1) * spec.sw + spec.kw;
  }
  detail::ConvGeom g;
  g.b = b;
  g.h = H;
  g.w = W;
  g.c = spec.out_channels;
  g.kh = spec.kh;
  g.kw = spec.kw;
  g.sh = spec.sh;
  g.sw = spec.sw;
  g.ho = h;
  g.wo = w;
  g.pad_t = detail::pad_before(H, g.kh, g.sh, h, spec.padding);
  g.pad_l = detail::pad_before(W, g.kw, g.sw, w, spec.padding);

  const std::size_t R = g.rows(), K = g.cols(), ci = spec.in_channels,
                    co = spec.out_channels;
  // col[r, :] = x[r, :] · Wᵀ, then scatter windows into the output plane.
  std::vector<T> col(R * K, T(0));
  if (R && K && ci)
    detail::gemm(static_cast<int>(R), static_cast<int>(K), static_cast<int>(ci),
                 x.data(), weights.data(), col.data(), false, true);
  std::vector<T> out(b * H * W * co, T(0));
  detail::col2im(col.data(), g, out.data());
  const T* pb = bias.data();
  for (std::size_t i = 0; i < b * H * W; ++i)
    for (std::size_t ch = 0; ch < co; ++ch) out[i * co + ch] += pb[ch];
  Tensor<T> result({b, H, W, co}, std::move(out));

  Tape<T>* tape = detail::merged_tape<T>({&x, &weights, &bias});
  if (tape) {
    int nx = x.on_tape() ? x.node() : -1;
    int nw = weights.on_tape() ? weights.node() : -1;
    int nb = bias.on_tape() ? bias.node() : -1;
    Tensor<T> xv = x.detached();
    Tensor<T> wv = weights.detached();
    int node = tape->record([=](const Tensor<T>& up, Gradients<T>& grads) {
      const T* pu = up.data();
      if (nb >= 0) {
        std::vector<T> db(co, T(0));
        for (std::size_t i = 0; i < b * H * W; ++i)
          for (std::size_t ch = 0; ch < co; ++ch) db[ch] += pu[i * co + ch];
        grads.add(nb, db.data(), co, {co});
      }
      std::vector<T> dcol;
      if (nw >= 0 || nx >= 0) dcol = detail::im2col(pu, g);
      if (nw >= 0) {
        std::vector<T> dw(K * ci, T(0));
        if (R && K && ci)
          detail::gemm(static_cast<int>(K), static_cast<int>(ci),
                       static_cast<int>(R), dcol.data(), xv.data(), dw.data(), true,
                       false);
        grads.add(nw, dw.data(), dw.size(), wshape);
      }
      if (nx >= 0) {
        std::vector<T> dx(R * ci, T(0));
        if (R && K && ci)
          detail::gemm(static_cast<int>(R), static_cast<int>(ci),
                       static_cast<int>(K), dcol.data(), wv.data(), dx.data(), false,
                       false);
        grads.add(nx, dx.data(), dx.size(), xv.shape());
      }
    });
    result = result.attached(tape, node);
  }
  return detail::restore_rank(result, had_batch);
}

// ---------------------------------------------------------------------------
// maxpool2d

template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x_in, std::size_t ph, std::size_t pw,
                    std::size_t sh, std::size_t sw) {
  auto [x, had_batch] = detail::as_rank4(x_in, "maxpool2d");
  if (ph == 0 || pw == 0 || sh == 0 || sw == 0)
    throw std::invalid_argument("maxpool2d: window and stride must be positive");
  std::size_t b = x.extent(0), h = x.extent(1), w = x.extent(2), c = x.extent(3);
  std::size_t ho = (h + sh - 1) / sh, wo = (w + sw - 1) / sw;
  std::size_t pad_t = detail::pad_before(h, ph, sh, ho, Padding::same);
  std::size_t pad_l = detail::pad_before(w, pw, sw, wo, Padding::same);
  const T* px = x.data();
  std::vector<T> out(b * ho * wo * c, -std::numeric_limits<T>::infinity());
  std::vector<std::size_t> arg(out.size(), 0);
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t oi = 0; oi < ho; ++oi)
      for (std::size_t oj = 0; oj < wo; ++oj)
        for (std::size_t ki = 0; ki < ph; ++ki) {
          std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(oi * sh + ki) -
                              static_cast<std::ptrdiff_t>(pad_t);
          if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kj = 0; kj < pw; ++kj) {
            std::ptrdiff_t wi = static_cast<std::ptrdiff_t>(oj * sw + kj) -
                                static_cast<std::ptrdiff_t>(pad_l);
            if (wi < 0 || wi >= static_cast<std::ptrdiff_t>(w)) continue;
            for (std::size_t ch = 0; ch < c; ++ch) {
              std::size_t src = ((bi * h + static_cast<std::size_t>(hi)) * w +
                                 static_cast<std::size_t>(wi)) *
                                    c +
                                ch;
              std::size_t dst = ((bi * ho + oi) * wo + oj) * c + ch;
              if (px[src] > out[dst]) {
                out[dst] = px[src];
                arg[dst] = src;
              }
            }
          }
        }
  Tensor<T> result({b, ho, wo, c}, std::move(out));
  if (x.on_tape()) {
    Tape<T>* tape = x.tape();
    int nx = x.node();
    std::size_t in_size = x.size();
    auto in_shape = x.shape();
    int node = tape->record([nx, arg, in_size, in_shape](const Tensor<T>& up,
                                                         Gradients<T>& grads) {
      const T* pu = up.data();
      std::vector<T> dx(in_size, T(0));
      for (std::size_t i = 0; i < arg.size(); ++i) dx[arg[i]] += pu[i];
      grads.add(nx, dx.data(), in_size, in_shape);
    });
    result = result.attached(tape, node);
  }
  return detail::restore_rank(result, had_batch);
}

// ---------------------------------------------------------------------------
// batch normalization

/// Per-channel affine normalization state. `momentum` is the retention
/// factor of the moving averages: running = momentum·running + (1−momentum)·batch.
/// Batch variance is the biased (1/N) estimator throughout.
template <class T>
struct BatchNormState {
  Tensor<T> gamma;         // (c), learnable
  Tensor<T> beta;          // (c), learnable
  Tensor<T> running_mean;  // (c), tracked, never on tape
  Tensor<T> running_var;   // (c)
  T momentum = T(0.99);
  T epsilon = T(1e-3);

  static BatchNormState make(std::size_t channels) {
    BatchNormState s;
    s.gamma = Tensor<T>::full({channels}, T(1));
    s.beta = Tensor<T>::zeros({channels});
    s.running_mean = Tensor<T>::zeros({channels});
    s.running_var = Tensor<T>::full({channels}, T(1));
    return s;
  }

  std::size_t channels() const { return running_mean.size(); }
};

/// Normalizes over all axes but the last. Train mode uses batch statistics
/// and updates the running averages in place; infer mode reads only the
/// running averages and is batch-independent.
template <class T>
Tensor<T> batchnorm(const Tensor<T>& x, BatchNormState<T>& state, RunMode mode) {
  std::size_t c = state.channels();
  if (x.rank() == 0 || x.extent(x.rank() - 1) != c)
    throw std::invalid_argument(detail::cat("batchnorm: trailing extent of ",
                                            detail::shape_str(x.shape()),
                                            " does not match ", c, " channels"));
  std::size_t n = x.size() / c;
  Tensor<T> x2 = reshape(x, {n, c});
  Tensor<T> y2;
  if (mode == RunMode::train) {
    if (n == 0) throw std::invalid_argument("batchnorm: empty batch in train mode");
    Tensor<T> mu = reduce_mean(x2, 0);
    Tensor<T> xc = sub(x2, mu);
    Tensor<T> var = reduce_mean(mul(xc, xc), 0);
    Tensor<T> inv = exp(mul(log(add(var, state.epsilon)), T(-0.5)));
    y2 = add(mul(mul(xc, inv), state.gamma), state.beta);
    const T* pm = mu.data();
    const T* pv = var.data();
    std::vector<T> rm(c), rv(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      rm[ch] = state.momentum * state.running_mean[ch] +
               (T(1) - state.momentum) * pm[ch];
      rv[ch] = state.momentum * state.running_var[ch] +
               (T(1) - state.momentum) * pv[ch];
    }
    state.running_mean = Tensor<T>({c}, std::move(rm));
    state.running_var = Tensor<T>({c}, std::move(rv));
  } else {
    std::vector<T> inv(c);
    for (std::size_t ch = 0; ch < c; ++ch)
      inv[ch] = T(1) / std::sqrt(state.running_var[ch] + state.epsilon);
    Tensor<T> inv_t({c}, std::move(inv));
    y2 = add(mul(mul(sub(x2, state.running_mean), inv_t), state.gamma), state.beta);
  }
  return reshape(y2, x.shape());
}

// ---------------------------------------------------------------------------
// dense

/// Affine map over the trailing axis: y[…, m] = x[…, n]·W[n, m] + b[m].
template <class T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (weights.rank() != 2)
    throw std::invalid_argument("dense: weights must be rank 2");
  std::size_t n = weights.extent(0), m = weights.extent(1);
  if (x.rank() == 0 || x.extent(x.rank() - 1) != n)
    throw std::invalid_argument(detail::cat("dense: input ",
                                            detail::shape_str(x.shape()),
                                            " incompatible with weights ",
                                            detail::shape_str(weights.shape())));
  if (bias.shape() != std::vector<std::size_t>{m})
    throw std::invalid_argument("dense: bias shape must be (m)");
  std::size_t rows = x.size() / n;
  Tensor<T> flat = reshape(x, {rows, n});
  Tensor<T> y = add(matmul(flat, weights), bias);
  std::vector<std::size_t> out_shape = x.shape();
  out_shape.back() = m;
  return reshape(y, out_shape);
}

// ---------------------------------------------------------------------------
// dropout

template <class T>
Tensor<T> dropout(const Tensor<T>& x, T rate, RunMode mode, Rng& rng) {
  if (!(rate >= T(0)) || rate >= T(1))
    throw std::invalid_argument(detail::cat("dropout rate ", rate,
                                            " outside [0, 1)"));
  if (mode == RunMode::infer || rate == T(0)) return x;
  T scale = T(1) / (T(1) - rate);
  std::vector<T> mask(x.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform() >= static_cast<double>(rate) ? scale : T(0);
  return mul(x, Tensor<T>(x.shape(), std::move(mask)));
}

// ---------------------------------------------------------------------------
// LSTM

/// One direction holds a single packed weight matrix over [x_t, h_{t−1}] and
/// one bias, gate order (input, forget, cell, output).
template <class T>
struct LstmParams {
  Tensor<T> w_fwd;  // (input + hidden, 4·hidden)
  Tensor<T> b_fwd;  // (4·hidden)
  Tensor<T> w_bwd;  // present when bidirectional
  Tensor<T> b_bwd;
};

/// Input rows glorot-uniform in ±√(6/(input + 4·hidden)), recurrent rows in
/// ±√(6/(5·hidden)); forget-gate bias 1, other biases 0. Scaling the input
/// block by its own fan-in keeps gate pre-activations near unit variance even
/// when the incoming feature is much wider than the hidden state; a single
/// hidden-sized limit saturates the gates there and starves everything
/// upstream of gradient.
template <class T>
LstmParams<T> lstm_init(Rng& rng, const LstmSpec& spec) {
  std::size_t in = spec.input_size, hid = spec.hidden_size;
  T in_limit = static_cast<T>(std::sqrt(6.0 / static_cast<double>(in + 4 * hid)));
  T rec_limit = static_cast<T>(std::sqrt(6.0 / static_cast<double>(5 * hid)));
  auto make_weights = [&] {
    std::vector<T> w((in + hid) * 4 * hid);
    for (std::size_t r = 0; r < in + hid; ++r) {
      T limit = r < in ? in_limit : rec_limit;
      for (std::size_t k = 0; k < 4 * hid; ++k)
        w[r * 4 * hid + k] = static_cast<T>(rng.uniform(-limit, limit));
    }
    return Tensor<T>({in + hid, 4 * hid}, std::move(w));
  };
  auto make_bias = [&] {
    std::vector<T> b(4 * hid, T(0));
    std::fill(b.begin() + static_cast<std::ptrdiff_t>(hid),
              b.begin() + static_cast<std::ptrdiff_t>(2 * hid), T(1));
    return Tensor<T>({4 * hid}, std::move(b));
  };
  LstmParams<T> p;
  p.w_fwd = make_weights();
  p.b_fwd = make_bias();
  if (spec.bidirectional) {
    p.w_bwd = make_weights();
    p.b_bwd = make_bias();
  }
  return p;
}

namespace detail {

template <class T>
std::vector<Tensor<T>> lstm_direction(const std::vector<Tensor<T>>& steps,
                                      const Tensor<T>& w, const Tensor<T>& b,
                                      std::size_t batch, std::size_t hid,
                                      bool reversed) {
  Tensor<T> h = Tensor<T>::zeros({batch, hid});
  Tensor<T> c = Tensor<T>::zeros({batch, hid});
  std::size_t steps_n = steps.size();
  std::vector<Tensor<T>> outputs(steps_n);
  for (std::size_t k = 0; k < steps_n; ++k) {
    std::size_t t = reversed ? steps_n - 1 - k : k;
    Tensor<T> joined = concat<T>({steps[t], h}, 1);
    Tensor<T> gates = add(matmul(joined, w), b);
    Tensor<T> i = sigmoid(slice(gates, {0, 0}, {batch, hid}));
    Tensor<T> f = sigmoid(slice(gates, {0, hid}, {batch, hid}));
    Tensor<T> g = tanh(slice(gates, {0, 2 * hid}, {batch, hid}));
    Tensor<T> o = sigmoid(slice(gates, {0, 3 * hid}, {batch, hid}));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh(c));
    outputs[t] = h;
  }
  return outputs;
}

}  // namespace detail

/// x is (T, n) or (batch, T, n). Returns, matching the input's batchedness:
/// return_sequences → (…, T, H), otherwise (…, H), where H = hidden·(bi ? 2 : 1).
template <class T>
Tensor<T> lstm_forward(const Tensor<T>& x_in, const LstmSpec& spec,
                       const LstmParams<T>& params) {
  bool had_batch = x_in.rank() == 3;
  if (x_in.rank() != 2 && x_in.rank() != 3)
    throw std::invalid_argument("lstm_forward: input must be (T, n) or (batch, T, n)");
  Tensor<T> x = had_batch
                    ? x_in
                    : reshape(x_in, {std::size_t(1), x_in.extent(0), x_in.extent(1)});
  std::size_t batch = x.extent(0), steps_n = x.extent(1), n = x.extent(2);
  if (steps_n == 0) throw std::invalid_argument("lstm_forward: empty sequence");
  if (n != spec.input_size)
    throw std::invalid_argument(detail::cat("lstm_forward: input width ", n,
                                            " does not match spec input_size ",
                                            spec.input_size));
  std::size_t hid = spec.hidden_size;
  std::vector<Tensor<T>> steps(steps_n);
  for (std::size_t t = 0; t < steps_n; ++t)
    steps[t] = reshape(slice(x, {0, t, 0}, {batch, 1, n}), {batch, n});

  auto fwd = detail::lstm_direction(steps, params.w_fwd, params.b_fwd, batch, hid, false);
  std::vector<Tensor<T>> rev;
  if (spec.bidirectional)
    rev = detail::lstm_direction(steps, params.w_bwd, params.b_bwd, batch, hid, true);

  Tensor<T> out;
  if (spec.return_sequences) {
    std::vector<Tensor<T>> rows(steps_n);
    for (std::size_t t = 0; t < steps_n; ++t) {
      Tensor<T> ht = spec.bidirectional ? concat<T>({fwd[t], rev[t]}, 1) : fwd[t];
      rows[t] = reshape(ht, {batch, std::size_t(1), ht.extent(1)});
    }
    out = concat(rows, 1);
  } else {
    out = spec.bidirectional ? concat<T>({fwd[steps_n - 1], rev[0]}, 1)
                             : fwd[steps_n - 1];
  }
  if (had_batch) return out;
  if (spec.return_sequences) return reshape(out, {steps_n, out.extent(2)});
  return reshape(out, {out.extent(1)});
}

// ---------------------------------------------------------------------------
// Initialization

/// Glorot/Xavier uniform: limit √(6 / (fan_in + fan_out)).
template <class T>
Tensor<T> glorot_uniform(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in,
                         std::size_t fan_out) {
  T limit = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  return Tensor<T>::uniform(rng, std::move(shape), -limit, limit);
}

/// One row of a model summary table.
struct LayerRow {
  std::string name;
  std::string output_shape;
  std::size_t params = 0;
};

inline std::size_t summary_total(const std::vector<LayerRow>& rows) {
  std::size_t total = 0;
  for (const LayerRow& r : rows) total += r.params;
  return total;
}

namespace detail {

inline std::string dims(std::initializer_list<std::size_t> d) {
  std::string s = "(None";
  for (std::size_t v : d) s += cat(", ", v);
  return s + ")";
}

}  // namespace detail

}  // namespace expdate
