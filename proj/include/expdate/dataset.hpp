// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// Paired-dataset generation and loading. Every sample derives its own RNG
// stream from hash(seed, index), so the emitted bytes are identical whether
// samples are produced serially or in parallel. A dataset directory holds
// input_NNNNNN.png / target_NNNNNN.png pairs plus manifest.jsonl, one JSON
// record per line with keys input, kind, label, offset, target.

#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "expdate/common.hpp"
#include "expdate/dates.hpp"
#include "expdate/image_io.hpp"
#include "expdate/render.hpp"

namespace expdate {

struct SampleRecord {
  std::string input;   // path relative to the dataset directory
  std::string target;  // path relative to the dataset directory
  std::string label;   // UTF-8 date text
  DateKind kind = DateKind::unrealistic;
  std::size_t dx = 0, dy = 0;
};

struct DatasetManifest {
  std::size_t height = 0, width = 0;
  std::vector<SampleRecord> records;
};

namespace detail {

inline std::string zero_pad(std::size_t value, std::size_t digits) {
  std::string s = std::to_string(value);
  return s.size() >= digits ? s : std::string(digits - s.size(), '0') + s;
}

inline nlohmann::json record_to_json(const SampleRecord& r) {
  return nlohmann::json{{"input", r.input},
                        {"target", r.target},
                        {"label", r.label},
                        {"kind", date_kind_name(r.kind)},
                        {"offset", {r.dx, r.dy}}};
}

inline SampleRecord record_from_json(const nlohmann::json& j) {
  SampleRecord r;
  r.input = j.at("input").get<std::string>();
  r.target = j.at("target").get<std::string>();
  r.label = j.at("label").get<std::string>();
  auto kind = parse_date_kind(j.at("kind").get<std::string>());
  if (!kind)
    throw std::runtime_error(detail::cat("manifest: unknown kind \"",
                                         j.at("kind").get<std::string>(), "\""));
  r.kind = *kind;
  r.dx = j.at("offset").at(0).get<std::size_t>();
  r.dy = j.at("offset").at(1).get<std::size_t>();
  return r;
}

}  // namespace detail

inline void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(detail::cat("cannot open ", path, " for writing"));
  for (const SampleRecord& r : m.records) out << detail::record_to_json(r).dump() << "\n";
}

inline DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(detail::cat("cannot open manifest ", path));
  DatasetManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    m.records.push_back(detail::record_from_json(nlohmann::json::parse(line)));
  }
  return m;
}

/// Emits `count` paired samples into `out_dir` and returns the manifest
/// (also written as out_dir/manifest.jsonl). Deterministic in (count, kind,
/// seed, canvas) regardless of `jobs`.
inline DatasetManifest generate_dataset(std::size_t count, DateKind kind,
                                        std::uint64_t seed, std::size_t height,
                                        std::size_t width, const std::string& out_dir,
                                        std::size_t jobs = 0) {
  if (count == 0) throw std::invalid_argument("generate_dataset: count must be > 0");
  GlyphAtlas atlas = atlas_for_canvas(height, width);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec)
    throw std::runtime_error(detail::cat("cannot create dataset directory ", out_dir,
                                         ": ", ec.message()));
  DatasetManifest manifest;
  manifest.height = height;
  manifest.width = width;
  manifest.records.resize(count);
  std::size_t th = text_height_px(atlas);
  if (jobs == 0) jobs = detail::max_threads();
  detail::parallel_for(
      count, std::max<std::size_t>(1, count / (4 * jobs) + 1),
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          Rng rng(Rng::derive(seed, i));
          DateText date = sample_date(rng, kind);
          std::vector<std::size_t> values = label_values(date.text);
          std::size_t tw = text_width_px(values, atlas);
          std::size_t dx = rng.uniform_int(width - tw + 1);
          std::size_t dy = rng.uniform_int(height - th + 1);
          SampleRecord& rec = manifest.records[i];
          rec.input = "input_" + detail::zero_pad(i, 6) + ".png";
          rec.target = "target_" + detail::zero_pad(i, 6) + ".png";
          rec.label = date.text;
          rec.kind = date.kind;
          rec.dx = dx;
          rec.dy = dy;
          write_png_gray(out_dir + "/" + rec.input,
                         render_dotmatrix(date.text, atlas, height, width, dx, dy));
          write_png_gray(out_dir + "/" + rec.target,
                         render_filled(date.text, atlas, height, width, dx, dy));
        }
      },
      jobs);
  write_manifest(out_dir + "/manifest.jsonl", manifest);
  return manifest;
}

/// One loaded pair, pixels already mapped to float {0, 1}.
template <class T>
struct Sample {
  Tensor<T> input;   // (H, W, 1)
  Tensor<T> target;  // (H, W, 1)
  std::vector<std::size_t> label;  // class values, length 10
  std::string label_text;
  DateKind kind = DateKind::unrealistic;
};

template <class T>
struct Dataset {
  std::size_t height = 0, width = 0;
  std::vector<Sample<T>> samples;
};

template <class T>
Dataset<T> load_dataset(const std::string& dir) {
  DatasetManifest m = read_manifest(dir + "/manifest.jsonl");
  Dataset<T> ds;
  ds.samples.reserve(m.records.size());
  for (const SampleRecord& rec : m.records) {
    GrayImage in_img = read_png_gray(dir + "/" + rec.input);
    GrayImage tg_img = read_png_gray(dir + "/" + rec.target);
    if (in_img.height != tg_img.height || in_img.width != tg_img.width)
      throw std::runtime_error(detail::cat("pair dimensions differ for ", rec.input));
    if (ds.samples.empty()) {
      ds.height = in_img.height;
      ds.width = in_img.width;
    } else if (in_img.height != ds.height || in_img.width != ds.width) {
      throw std::runtime_error(detail::cat("dataset has mixed canvas sizes at ",
                                           rec.input));
    }
    Sample<T> s;
    s.input = image_to_tensor<T>(in_img);
    s.target = image_to_tensor<T>(tg_img);
    s.label = label_values(rec.label);
    s.label_text = rec.label;
    s.kind = rec.kind;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

/// Stacks the chosen field of the indexed samples into (B, H, W, 1).
template <class T>
Tensor<T> make_batch(const Dataset<T>& ds, const std::vector<std::size_t>& indices,
                     bool use_target) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty index list");
  std::size_t per = ds.height * ds.width;
  std::vector<T> buf(indices.size() * per);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Sample<T>& s = ds.samples.at(indices[k]);
    const Tensor<T>& img = use_target ? s.target : s.input;
    std::copy(img.data(), img.data() + per, buf.begin() + static_cast<std::ptrdiff_t>(k * per));
  }
  return Tensor<T>({indices.size(), ds.height, ds.width, 1}, std::move(buf));
}

}  // namespace expdate
