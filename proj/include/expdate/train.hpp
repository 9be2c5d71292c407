// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "expdate/checkpoint.hpp"
#include "expdate/crnn.hpp"
#include "expdate/ctc.hpp"
#include "expdate/dataset.hpp"
#include "expdate/optim.hpp"
#include "expdate/vae.hpp"

namespace expdate {

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double clip_norm = 5.0;      // CTC only; <= 0 disables
  std::string out;             // checkpoint path; empty skips saving
  std::string metrics;         // CSV path; empty skips writing
  std::ostream* log = nullptr;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double seconds = 0.0;
  double loss_total = 0.0;
  std::optional<double> loss_recon, loss_kl, loss_ctc, accuracy;
};

namespace detail {

inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string csv_cell(const std::optional<double>& v) {
  return v ? fmt_g(*v) : "";
}

}  // namespace detail

inline std::string metrics_csv_header() {
  return "epoch,seconds,loss_total,loss_recon,loss_kl,loss_ctc,accuracy";
}

inline std::string metrics_csv_row(const EpochMetrics& m) {
  return detail::cat(m.epoch, ",", detail::fmt_g(m.seconds), ",",
                     detail::fmt_g(m.loss_total), ",", detail::csv_cell(m.loss_recon),
                     ",", detail::csv_cell(m.loss_kl), ",",
                     detail::csv_cell(m.loss_ctc), ",", detail::csv_cell(m.accuracy));
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<EpochMetrics>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(detail::cat("cannot open metrics file ", path));
  out << metrics_csv_header() << "\n";
  for (const EpochMetrics& m : rows) out << metrics_csv_row(m) << "\n";
}

inline std::vector<EpochMetrics> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(detail::cat("cannot open metrics file ", path));
  std::string line;
  if (!std::getline(in, line) || line != metrics_csv_header())
    throw std::runtime_error(detail::cat("bad metrics header in ", path));
  std::vector<EpochMetrics> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i)
      if (i == line.size() || line[i] == ',') {
        cells.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    if (cells.size() != 7)
      throw std::runtime_error(detail::cat("bad metrics row in ", path, ": ", line));
    EpochMetrics m;
    m.epoch = static_cast<std::size_t>(std::stoull(cells[0]));
    m.seconds = std::stod(cells[1]);
    m.loss_total = std::stod(cells[2]);
    auto opt = [](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return std::stod(s);
    };
    m.loss_recon = opt(cells[3]);
    m.loss_kl = opt(cells[4]);
    m.loss_ctc = opt(cells[5]);
    m.accuracy = opt(cells[6]);
    rows.push_back(m);
  }
  return rows;
}

namespace detail {

inline std::vector<std::size_t> shuffled_indices(Rng& rng, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(i))]);
  return idx;
}

template <class T, class Params>
std::vector<std::pair<std::string, Tensor<T>*>> watch_trainable(Tape<T>& tape,
                                                                Params& params) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  params.visit([&](const std::string& name, Tensor<T>& t, bool trainable) {
    if (!trainable) return;
    t = tape.watch(t);
    out.emplace_back(name, &t);
  });
  return out;
}

/// Scales gradients in place so their global L2 norm is at most `max_norm`.
template <class T>
void clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm) {
  if (max_norm <= 0) return;
  double sq = 0;
  for (const Tensor<T>& g : grads) {
    const T* p = g.data();
    for (std::size_t i = 0; i < g.size(); ++i)
      sq += static_cast<double>(p[i]) * static_cast<double>(p[i]);
  }
  double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const T scale = static_cast<T>(max_norm / norm);
  for (Tensor<T>& g : grads) {
    std::vector<T> v(g.values());
    for (T& x : v) x *= scale;
    g = Tensor<T>(g.shape(), std::move(v));
  }
}

inline CheckpointMeta meta_from(std::size_t epoch, double loss, const Rng& rng) {
  CheckpointMeta m;
  m.epoch = epoch;
  m.loss = loss;
  m.rng_seed = rng.seed();
  m.rng_counter = rng.counter();
  m.rng_has_spare = rng.has_spare();
  m.rng_spare = rng.spare();
  return m;
}

}  // namespace detail

template <class T>
struct VaeTrainResult {
  VaeParams<T> params;
  std::vector<EpochMetrics> metrics;
};

/// Trains the translator on (degraded input, filled target) pairs with the
/// ELBO objective. One checkpoint and one metrics rewrite per epoch.
template <class T>
VaeTrainResult<T> train_vae(const VaeConfig& cfg, const Dataset<T>& data,
                            const TrainOptions& opt) {
  validate_config(cfg);
  if (data.samples.empty()) throw std::invalid_argument("train_vae: empty dataset");
  if (data.height != cfg.height || data.width != cfg.width)
    throw std::invalid_argument(detail::cat(
        "train_vae: dataset is ", data.height, "x", data.width, ", model expects ",
        cfg.height, "x", cfg.width));
  if (opt.batch_size == 0) throw std::invalid_argument("train_vae: batch size 0");
  if (opt.epochs == 0) throw std::invalid_argument("train_vae: zero epochs");

  Rng rng(opt.seed);
  VaeParams<T> params = vae_init<T>(rng, cfg);
  Optimizer<T> optimizer(opt.optimizer, static_cast<T>(opt.lr));
  const std::size_t n = data.samples.size();
  std::vector<EpochMetrics> metrics;

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order = detail::shuffled_indices(rng, n);
    double sum_total = 0, sum_recon = 0, sum_kl = 0;
    for (std::size_t start = 0; start < n; start += opt.batch_size) {
      std::size_t stop = std::min(n, start + opt.batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(stop));
      Tensor<T> x = make_batch(data, batch, false);
      Tensor<T> target = make_batch(data, batch, true);

      Tape<T> tape;
      auto trainable = detail::watch_trainable(tape, params);
      auto [z_mean, z_logvar] = encode(cfg, params, x, RunMode::train, rng);
      Tensor<T> z = sample_latent(z_mean, z_logvar, rng);
      Tensor<T> x_hat = decode(cfg, params, z);
      ElboLoss<T> loss = elbo_loss(target, x_hat, z_mean, z_logvar);
      Gradients<T> grads = tape.backward(loss.total);

      optimizer.begin_step();
      for (auto& [name, t] : trainable)
        *t = optimizer.update(name, t->detached(), grads.at(*t));

      double w = static_cast<double>(batch.size());
      sum_total += static_cast<double>(loss.total.item()) * w;
      sum_recon += static_cast<double>(loss.reconstruction.item()) * w;
      sum_kl += static_cast<double>(loss.kl.item()) * w;
    }
    auto t1 = std::chrono::steady_clock::now();

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.seconds = std::chrono::duration<double>(t1 - t0).count();
    m.loss_total = sum_total / static_cast<double>(n);
    m.loss_recon = sum_recon / static_cast<double>(n);
    m.loss_kl = sum_kl / static_cast<double>(n);
    metrics.push_back(m);

    if (opt.log)
      *opt.log << "epoch " << m.epoch << "/" << opt.epochs << "  elbo "
               << detail::fmt_g(m.loss_total) << "  (recon "
               << detail::fmt_g(*m.loss_recon) << ", kl " << detail::fmt_g(*m.loss_kl)
               << ")  " << detail::fmt_g(m.seconds) << "s" << std::endl;
    if (!opt.out.empty())
      save_vae_checkpoint(opt.out, cfg, params,
                          detail::meta_from(m.epoch, m.loss_total, rng));
    if (!opt.metrics.empty()) write_metrics_csv(opt.metrics, metrics);
  }
  return {std::move(params), std::move(metrics)};
}

template <class T>
struct CrnnTrainResult {
  CrnnParams<T> params;
  std::vector<EpochMetrics> metrics;
};

/// Trains the recognizer on clean filled renders with the CTC objective.
/// Per-epoch accuracy is greedy decoding of the same forward passes.
template <class T>
CrnnTrainResult<T> train_crnn(const CrnnConfig& cfg, const Dataset<T>& data,
                              const TrainOptions& opt) {
  validate_config(cfg);
  if (data.samples.empty()) throw std::invalid_argument("train_crnn: empty dataset");
  if (data.height != cfg.height || data.width != cfg.width)
    throw std::invalid_argument(detail::cat(
        "train_crnn: dataset is ", data.height, "x", data.width, ", model expects ",
        cfg.height, "x", cfg.width));
  if (opt.batch_size == 0) throw std::invalid_argument("train_crnn: batch size 0");
  if (opt.epochs == 0) throw std::invalid_argument("train_crnn: zero epochs");
  const std::size_t steps = cfg.time_steps();
  for (const Sample<T>& s : data.samples)
    if (ctc_min_steps(s.label) > steps)
      throw std::invalid_argument(detail::cat(
          "train_crnn: label \"", s.label_text, "\" needs ", ctc_min_steps(s.label),
          " time steps, the model emits ", steps));

  Rng rng(opt.seed);
  CrnnParams<T> params = crnn_init<T>(rng, cfg);
  Optimizer<T> optimizer(opt.optimizer, static_cast<T>(opt.lr));
  const std::size_t n = data.samples.size();
  std::vector<EpochMetrics> metrics;

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order = detail::shuffled_indices(rng, n);
    double sum_loss = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += opt.batch_size) {
      std::size_t stop = std::min(n, start + opt.batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(stop));
      Tensor<T> x = make_batch(data, batch, true);

      Tape<T> tape;
      auto trainable = detail::watch_trainable(tape, params);
      Tensor<T> log_probs = crnn_forward(cfg, params, x);
      Tensor<T> loss;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        Tensor<T> lp = reshape(
            slice(log_probs, {k, 0, 0}, {1, steps, cfg.classes}),
            {steps, cfg.classes});
        Tensor<T> lk = ctc_loss(lp, data.samples[batch[k]].label);
        loss = k == 0 ? lk : add(loss, lk);
        if (ctc_greedy_decode(lp.detached()) == data.samples[batch[k]].label)
          ++correct;
      }
      loss = mul(loss, static_cast<T>(1.0 / static_cast<double>(batch.size())));
      Gradients<T> grads = tape.backward(loss);

      std::vector<Tensor<T>> gs;
      gs.reserve(trainable.size());
      for (auto& [name, t] : trainable) gs.push_back(grads.at(*t));
      detail::clip_global_norm(gs, opt.clip_norm);

      optimizer.begin_step();
      for (std::size_t i = 0; i < trainable.size(); ++i)
        *trainable[i].second =
            optimizer.update(trainable[i].first, trainable[i].second->detached(), gs[i]);

      sum_loss += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
    }
    auto t1 = std::chrono::steady_clock::now();

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.seconds = std::chrono::duration<double>(t1 - t0).count();
    m.loss_total = sum_loss / static_cast<double>(n);
    m.loss_ctc = m.loss_total;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    metrics.push_back(m);

    if (opt.log)
      *opt.log << "epoch " << m.epoch << "/" << opt.epochs << "  ctc "
               << detail::fmt_g(m.loss_total) << "  acc " << detail::fmt_g(*m.accuracy)
               << "  " << detail::fmt_g(m.seconds) << "s" << std::endl;
    if (!opt.out.empty())
      save_crnn_checkpoint(opt.out, cfg, params,
                           detail::meta_from(m.epoch, m.loss_total, rng));
    if (!opt.metrics.empty()) write_metrics_csv(opt.metrics, metrics);
  }
  return {std::move(params), std::move(metrics)};
}

}  // namespace expdate
