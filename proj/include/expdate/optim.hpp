// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "expdate/tensor.hpp"

namespace expdate {

enum class OptimizerKind { sgd, momentum, adam };

inline const char* optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::adam: return "adam";
  }
  return "?";
}

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "momentum") return OptimizerKind::momentum;
  if (s == "adam") return OptimizerKind::adam;
  throw std::invalid_argument(detail::cat(
      "unknown optimizer \"", s, "\" (expected sgd, momentum, or adam)"));
}

/// First-order optimizer with per-parameter state keyed by name. `update`
/// returns the new parameter value and never mutates its inputs.
template <class T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, T lr) : kind_(kind), lr_(lr) {
    if (!(lr > T(0)))
      throw std::invalid_argument(detail::cat("learning rate must be positive, got ", lr));
  }

  OptimizerKind kind() const { return kind_; }
  T learning_rate() const { return lr_; }
  std::size_t steps() const { return step_; }

  /// Call once per batch, before the per-parameter updates.
  void begin_step() { ++step_; }

  Tensor<T> update(const std::string& name, const Tensor<T>& param,
                   const Tensor<T>& grad) {
    if (param.shape() != grad.shape())
      throw std::invalid_argument(detail::cat(
          "optimizer update for ", name, ": parameter shape ",
          detail::shape_str(param.shape()), " vs gradient shape ",
          detail::shape_str(grad.shape())));
    const T* g = grad.data();
    const T* p = param.data();
    std::size_t n = param.size();
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(static_cast<double>(g[i])))
        throw std::runtime_error(detail::cat("non-finite gradient for ", name,
                                             " at flat index ", i));
    std::vector<T> out(n);
    switch (kind_) {
      case OptimizerKind::sgd: {
        for (std::size_t i = 0; i < n; ++i) out[i] = p[i] - lr_ * g[i];
        break;
      }
      case OptimizerKind::momentum: {
        std::vector<T>& v = state(mom_, name, n);
        for (std::size_t i = 0; i < n; ++i) {
          v[i] = beta_momentum_ * v[i] + g[i];
          out[i] = p[i] - lr_ * v[i];
        }
        break;
      }
      case OptimizerKind::adam: {
        std::vector<T>& m = state(adam_m_, name, n);
        std::vector<T>& v = state(adam_v_, name, n);
        const T c1 = T(1) - static_cast<T>(std::pow(double(beta1_), double(step_)));
        const T c2 = T(1) - static_cast<T>(std::pow(double(beta2_), double(step_)));
        for (std::size_t i = 0; i < n; ++i) {
          m[i] = beta1_ * m[i] + (T(1) - beta1_) * g[i];
          v[i] = beta2_ * v[i] + (T(1) - beta2_) * g[i] * g[i];
          const T mhat = m[i] / c1;
          const T vhat = v[i] / c2;
          out[i] = p[i] - lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
        break;
      }
    }
    return Tensor<T>(param.shape(), std::move(out));
  }

 private:
  std::vector<T>& state(std::map<std::string, std::vector<T>>& slots,
                        const std::string& name, std::size_t n) {
    auto [it, fresh] = slots.try_emplace(name);
    if (fresh) it->second.assign(n, T(0));
    return it->second;
  }

  OptimizerKind kind_;
  T lr_;
  T beta1_ = static_cast<T>(0.9);
  T beta2_ = static_cast<T>(0.999);
  T eps_ = static_cast<T>(1e-8);
  T beta_momentum_ = static_cast<T>(0.9);
  std::size_t step_ = 0;
  std::map<std::string, std::vector<T>> mom_, adam_m_, adam_v_;
};

}  // namespace expdate
