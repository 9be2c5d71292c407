// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end evaluation: translate each degraded input with the VAE
// (deterministic latent), decode with the CRNN, and score exact-match
// sequence accuracy. Emits a machine-readable report and an optional
// input | reconstruction | target grid image.

#pragma once

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <string>
#include <vector>

#include "expdate/crnn.hpp"
#include "expdate/ctc.hpp"
#include "expdate/dataset.hpp"
#include "expdate/vae.hpp"

namespace expdate {

/// Confusion rows are true classes 0–10 (digits then slash); columns add a
/// final "none" bucket for characters of predictions whose length differs
/// from the label, where no positional alignment exists.
struct PipelineReport {
  std::string dataset_dir;
  std::size_t sample_count = 0;
  std::string vae_checkpoint;
  std::uint64_t vae_epoch = 0;
  std::string crnn_checkpoint;
  std::uint64_t crnn_epoch = 0;
  double accuracy = 0.0;
  double mean_latency_ms = 0.0;
  std::vector<std::vector<std::uint64_t>> confusion;  // 11 x 12

  bool operator==(const PipelineReport&) const = default;
};

inline std::vector<std::vector<std::uint64_t>> empty_confusion() {
  return std::vector<std::vector<std::uint64_t>>(
      Charset::alphabet_size,
      std::vector<std::uint64_t>(Charset::alphabet_size + 1, 0));
}

inline nlohmann::json pipeline_report_to_json(const PipelineReport& r) {
  std::vector<std::string> row_labels, col_labels;
  for (std::size_t v = 0; v < Charset::alphabet_size; ++v)
    row_labels.push_back(default_atlas().by_value(v).utf8);
  col_labels = row_labels;
  col_labels.push_back("none");
  return nlohmann::json{
      {"dataset", {{"dir", r.dataset_dir}, {"count", r.sample_count}}},
      {"vae_checkpoint", {{"path", r.vae_checkpoint}, {"epoch", r.vae_epoch}}},
      {"crnn_checkpoint", {{"path", r.crnn_checkpoint}, {"epoch", r.crnn_epoch}}},
      {"accuracy", r.accuracy},
      {"mean_latency_ms", r.mean_latency_ms},
      {"confusion",
       {{"rows", row_labels}, {"columns", col_labels}, {"counts", r.confusion}}}};
}

inline PipelineReport pipeline_report_from_json(const nlohmann::json& j) {
  PipelineReport r;
  r.dataset_dir = j.at("dataset").at("dir").get<std::string>();
  r.sample_count = j.at("dataset").at("count").get<std::size_t>();
  r.vae_checkpoint = j.at("vae_checkpoint").at("path").get<std::string>();
  r.vae_epoch = j.at("vae_checkpoint").at("epoch").get<std::uint64_t>();
  r.crnn_checkpoint = j.at("crnn_checkpoint").at("path").get<std::string>();
  r.crnn_epoch = j.at("crnn_checkpoint").at("epoch").get<std::uint64_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.mean_latency_ms = j.at("mean_latency_ms").get<double>();
  r.confusion =
      j.at("confusion").at("counts").get<std::vector<std::vector<std::uint64_t>>>();
  if (r.confusion.size() != Charset::alphabet_size)
    throw std::runtime_error("report confusion matrix must have 11 rows");
  for (const auto& row : r.confusion)
    if (row.size() != Charset::alphabet_size + 1)
      throw std::runtime_error("report confusion matrix must have 12 columns");
  return r;
}

inline void save_pipeline_report(const std::string& path, const PipelineReport& r) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(detail::cat("cannot open report file ", path));
  out << pipeline_report_to_json(r).dump(2) << "\n";
}

inline PipelineReport load_pipeline_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(detail::cat("cannot open report file ", path));
  nlohmann::json j;
  in >> j;
  return pipeline_report_from_json(j);
}

/// Runs translate → recognize per sample, timing each image individually.
template <class T>
PipelineReport evaluate_pipeline(const VaeConfig& vcfg, VaeParams<T>& vae,
                                 const CrnnConfig& ccfg, CrnnParams<T>& crnn,
                                 const Dataset<T>& data) {
  if (data.samples.empty())
    throw std::invalid_argument("evaluate_pipeline: empty dataset");
  if (vcfg.height != ccfg.height || vcfg.width != ccfg.width)
    throw std::invalid_argument(detail::cat(
        "evaluate_pipeline: translator emits ", vcfg.height, "x", vcfg.width,
        ", recognizer expects ", ccfg.height, "x", ccfg.width));
  if (data.height != vcfg.height || data.width != vcfg.width)
    throw std::invalid_argument(detail::cat(
        "evaluate_pipeline: dataset is ", data.height, "x", data.width,
        ", models expect ", vcfg.height, "x", vcfg.width));

  PipelineReport report;
  report.sample_count = data.samples.size();
  report.confusion = empty_confusion();
  Rng unused(0);
  std::size_t correct = 0;
  double total_seconds = 0;
  for (const Sample<T>& s : data.samples) {
    auto t0 = std::chrono::steady_clock::now();
    Tensor<T> recon = translate(vcfg, vae, s.input, /*deterministic=*/true, unused);
    Tensor<T> log_probs = crnn_forward(ccfg, crnn, recon);
    std::vector<std::size_t> pred = ctc_greedy_decode(log_probs);
    auto t1 = std::chrono::steady_clock::now();
    total_seconds += std::chrono::duration<double>(t1 - t0).count();

    if (pred == s.label) ++correct;
    for (std::size_t i = 0; i < s.label.size(); ++i) {
      std::size_t col = pred.size() == s.label.size() ? pred[i]
                                                      : Charset::alphabet_size;
      report.confusion.at(s.label[i]).at(col) += 1;
    }
  }
  report.accuracy =
      static_cast<double>(correct) / static_cast<double>(data.samples.size());
  report.mean_latency_ms =
      1000.0 * total_seconds / static_cast<double>(data.samples.size());
  return report;
}

/// Stacks up to `max_rows` samples as input | reconstruction | target strips
/// separated by mid-gray rules.
template <class T>
GrayImage reconstruction_grid(const VaeConfig& cfg, VaeParams<T>& params,
                              const Dataset<T>& data, std::size_t max_rows = 8) {
  if (data.samples.empty())
    throw std::invalid_argument("reconstruction_grid: empty dataset");
  const std::size_t rows = std::min(max_rows, data.samples.size());
  const std::size_t gap = 2;
  const std::uint8_t rule = 128;
  const std::size_t h = data.height, w = data.width;
  GrayImage grid = GrayImage::blank(rows * h + (rows - 1) * gap,
                                    3 * w + 2 * gap, rule);
  Rng unused(0);
  for (std::size_t r = 0; r < rows; ++r) {
    const Sample<T>& s = data.samples[r];
    Tensor<T> recon = translate(cfg, params, s.input, /*deterministic=*/true, unused);
    GrayImage panels[3] = {tensor_to_image(s.input), tensor_to_image(recon),
                           tensor_to_image(s.target)};
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          grid.at(r * (h + gap) + y, p * (w + gap) + x) = panels[p].at(y, x);
  }
  return grid;
}

}  // namespace expdate
