// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// Connectionist temporal classification: forward (alpha) recursion in log
// space over the blank-interleaved extended label, alpha-beta posterior
// gradients, greedy decoding, and exact-match sequence accuracy. All internal
// arithmetic runs in double regardless of the tensor dtype.

#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "expdate/dates.hpp"
#include "expdate/tensor.hpp"

namespace expdate {

/// The recognizer alphabet: Arabic-Indic digits (indices 0–9), "/" (10),
/// CTC blank (11).
struct Charset {
  static constexpr std::size_t alphabet_size = 11;
  static constexpr std::size_t blank = 11;
  static constexpr std::size_t classes = 12;

  static std::vector<std::size_t> encode(std::string_view text) {
    return label_values(text);
  }

  static std::string decode(const std::vector<std::size_t>& indices) {
    return text_from_values(indices);
  }
};

namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct CtcTables {
  double log_p = kNegInf;        // log of the total path probability
  std::vector<double> grad;      // T·C, d(−log P)/d(log_probs)
};

/// Shared alpha/beta computation over the extended label.
inline CtcTables ctc_tables(const std::vector<double>& lp, std::size_t T,
                            std::size_t C, const std::vector<std::size_t>& label,
                            std::size_t blank) {
  const std::size_t U = label.size();
  const std::size_t S = 2 * U + 1;
  std::vector<std::size_t> ext(S, blank);
  for (std::size_t i = 0; i < U; ++i) ext[2 * i + 1] = label[i];
  auto allow_skip = [&](std::size_t s) {
    return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
  };

  std::vector<double> alpha(T * S, kNegInf), beta(T * S, kNegInf);
  alpha[0] = lp[blank];
  if (S > 1) alpha[1] = lp[ext[1]];
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha[(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
      if (allow_skip(s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
      alpha[t * S + s] = a + lp[t * C + ext[s]];
    }
  beta[(T - 1) * S + S - 1] = 0.0;
  if (S > 1) beta[(T - 1) * S + S - 2] = 0.0;
  for (std::size_t t = T - 1; t-- > 0;)
    for (std::size_t s = 0; s < S; ++s) {
      double b = beta[(t + 1) * S + s] + lp[(t + 1) * C + ext[s]];
      if (s + 1 < S)
        b = log_add(b, beta[(t + 1) * S + s + 1] + lp[(t + 1) * C + ext[s + 1]]);
      if (s + 2 < S && allow_skip(s + 2))
        b = log_add(b, beta[(t + 1) * S + s + 2] + lp[(t + 1) * C + ext[s + 2]]);
      beta[t * S + s] = b;
    }

  CtcTables out;
  out.log_p = log_add(alpha[(T - 1) * S + S - 1],
                      S > 1 ? alpha[(T - 1) * S + S - 2] : kNegInf);
  out.grad.assign(T * C, 0.0);
  if (out.log_p == kNegInf) return out;  // zero-probability input: no gradient
  std::vector<double> acc(C);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(acc.begin(), acc.end(), kNegInf);
    for (std::size_t s = 0; s < S; ++s)
      acc[ext[s]] = log_add(acc[ext[s]], alpha[t * S + s] + beta[t * S + s]);
    for (std::size_t k = 0; k < C; ++k)
      if (acc[k] != kNegInf)
        out.grad[t * C + k] = -std::exp(acc[k] - out.log_p);
  }
  return out;
}

}  // namespace detail

/// Fewest time steps any path for `label` can occupy: one per symbol plus one
/// separating blank per adjacent repeat.
inline std::size_t ctc_min_steps(const std::vector<std::size_t>& label) {
  std::size_t n = label.size();
  for (std::size_t i = 1; i < label.size(); ++i)
    if (label[i] == label[i - 1]) ++n;
  return n;
}

/// −log P(label | log_probs) over all CTC alignments. log_probs is (T, C)
/// with the blank as class C−1; differentiable through log_probs.
template <class T>
Tensor<T> ctc_loss(const Tensor<T>& log_probs, const std::vector<std::size_t>& label) {
  if (log_probs.rank() != 2)
    throw std::invalid_argument(detail::cat("ctc_loss: log_probs must be (T, C), got ",
                                            detail::shape_str(log_probs.shape())));
  const std::size_t steps = log_probs.extent(0);
  const std::size_t classes = log_probs.extent(1);
  if (classes < 2) throw std::invalid_argument("ctc_loss: need at least two classes");
  const std::size_t blank = classes - 1;
  if (label.empty()) throw std::invalid_argument("ctc_loss: empty label");
  for (std::size_t v : label)
    if (v >= blank)
      throw std::invalid_argument(detail::cat("ctc_loss: label symbol ", v,
                                              v == blank ? " is the blank class"
                                                         : " is out of range"));
  std::size_t need = ctc_min_steps(label);
  if (steps < need)
    throw std::invalid_argument(detail::cat("ctc_loss: label needs at least ", need,
                                            " time steps, log_probs has ", steps));

  std::vector<double> lp(log_probs.size());
  const T* p = log_probs.data();
  for (std::size_t i = 0; i < lp.size(); ++i) lp[i] = static_cast<double>(p[i]);
  detail::CtcTables tables = detail::ctc_tables(lp, steps, classes, label, blank);
  Tensor<T> result = Tensor<T>::scalar(static_cast<T>(-tables.log_p));
  if (!log_probs.on_tape()) return result;
  Tape<T>* tape = log_probs.tape();
  int nl = log_probs.node();
  auto shape = log_probs.shape();
  int node = tape->record(
      [nl, grad = std::move(tables.grad), shape](const Tensor<T>& up, Gradients<T>& g) {
        T u = up.data()[0];
        std::vector<T> d(grad.size());
        for (std::size_t i = 0; i < grad.size(); ++i)
          d[i] = u * static_cast<T>(grad[i]);
        g.add(nl, d.data(), d.size(), shape);
      });
  return result.attached(tape, node);
}

/// Per-step argmax, collapse adjacent repeats, drop blanks.
template <class T>
std::vector<std::size_t> ctc_greedy_decode(const Tensor<T>& log_probs) {
  if (log_probs.rank() != 2)
    throw std::invalid_argument("ctc_greedy_decode: log_probs must be (T, C)");
  const std::size_t classes = log_probs.extent(1);
  const std::size_t blank = classes - 1;
  std::vector<std::size_t> path = argmax_last(log_probs);
  std::vector<std::size_t> out;
  std::size_t prev = blank;
  for (std::size_t k : path) {
    if (k != prev && k != blank) out.push_back(k);
    prev = k;
  }
  return out;
}

/// Fraction of exact string matches.
inline double sequence_accuracy(const std::vector<std::string>& predictions,
                                const std::vector<std::string>& truths) {
  if (predictions.size() != truths.size())
    throw std::invalid_argument(detail::cat("sequence_accuracy: ", predictions.size(),
                                            " predictions vs ", truths.size(),
                                            " truths"));
  if (predictions.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == truths[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

}  // namespace expdate
