// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared test helpers: central finite-difference gradient checking at
// 64-bit, with optional random subsampling of large inputs.

#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "expdate/expdate.hpp"

namespace expdate::testing {

struct GradCheck {
  double eps = 1e-5;
  double tol = 1e-4;
  std::size_t max_checks_per_input = 0;  // 0 checks every coordinate
  std::uint64_t pick_seed = 2024;
};

/// `build` maps the watched copies of `inputs` to a scalar loss on their
/// tape; it must be deterministic (seed any internal Rng per call).
template <class Fn>
void expect_gradients_match(const std::vector<Tensor<double>>& inputs, Fn&& build,
                            const GradCheck& cfg = {}) {
  Tape<double> tape;
  std::vector<Tensor<double>> watched;
  watched.reserve(inputs.size());
  for (const Tensor<double>& t : inputs) watched.push_back(tape.watch(t));
  Tensor<double> loss = build(watched);
  ASSERT_EQ(loss.size(), 1u) << "gradient check requires a scalar loss";
  Gradients<double> grads = tape.backward(loss);
  std::vector<Tensor<double>> analytic;
  analytic.reserve(watched.size());
  for (const Tensor<double>& w : watched) analytic.push_back(grads.at(w));

  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> t;
    std::vector<Tensor<double>> ws;
    ws.reserve(xs.size());
    for (const Tensor<double>& x : xs) ws.push_back(t.watch(x));
    return build(ws).item();
  };

  Rng pick(cfg.pick_seed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<std::size_t> coords;
    std::size_t n = inputs[i].size();
    if (cfg.max_checks_per_input == 0 || n <= cfg.max_checks_per_input) {
      coords.resize(n);
      for (std::size_t j = 0; j < n; ++j) coords[j] = j;
    } else {
      coords.reserve(cfg.max_checks_per_input);
      for (std::size_t k = 0; k < cfg.max_checks_per_input; ++k)
        coords.push_back(static_cast<std::size_t>(pick.uniform_int(n)));
    }
    for (std::size_t j : coords) {
      std::vector<Tensor<double>> xs = inputs;
      std::vector<double> v = inputs[i].values();
      v[j] += cfg.eps;
      xs[i] = Tensor<double>(inputs[i].shape(), v);
      double up = eval(xs);
      v[j] -= 2 * cfg.eps;
      xs[i] = Tensor<double>(inputs[i].shape(), v);
      double down = eval(xs);
      double fd = (up - down) / (2 * cfg.eps);
      double an = analytic[i].data()[j];
      double denom = std::max({1.0, std::fabs(fd), std::fabs(an)});
      EXPECT_LE(std::fabs(fd - an) / denom, cfg.tol)
          << "input " << i << " coordinate " << j << ": analytic " << an
          << " vs finite difference " << fd;
    }
  }
}

inline Tensor<double> random_tensor(Rng& rng, std::vector<std::size_t> shape,
                                    double scale = 1.0) {
  Tensor<double> t = Tensor<double>::randn(rng, std::move(shape));
  return scale == 1.0 ? t : mul(t, scale);
}

}  // namespace expdate::testing
