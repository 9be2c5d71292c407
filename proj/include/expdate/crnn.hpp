// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// Compact CRNN recognizer: three 3x3 stride-1 convolutions with decreasing
// feature maps (16, 8, 4) and 2x2 pooling after the first two, columnization
// into a left-to-right sequence, three stacked bidirectional LSTM layers of
// 16 hidden units per direction, and a per-step linear projection to the 12
// CTC classes followed by log-softmax.

#pragma once

#include <string>
#include <vector>

#include "expdate/ctc.hpp"
#include "expdate/nn.hpp"

namespace expdate {

struct CrnnConfig {
  std::size_t height = 64, width = 256;
  std::size_t in_channels = 1;  // 3 replicates the grayscale input per Table 4
  std::vector<std::size_t> conv_maps{16, 8, 4};
  std::size_t lstm_layers = 3;
  std::size_t lstm_hidden = 16;
  std::size_t classes = Charset::classes;

  static CrnnConfig paper() { return CrnnConfig{}; }

  // Half-resolution preset for CPU smoke runs. Wider maps and a single
  // recurrent layer trade parameters for optimizer steps: the deep narrow
  // stack needs far more updates to leave the all-blank CTC plateau than a
  // short training run provides.
  static CrnnConfig toy() {
    CrnnConfig c;
    c.height = 32;
    c.width = 128;
    c.conv_maps = {32, 16, 8};
    c.lstm_layers = 1;
    c.lstm_hidden = 32;
    return c;
  }

  std::size_t time_steps() const { return ((width + 1) / 2 + 1) / 2; }
  std::size_t pooled_height() const { return ((height + 1) / 2 + 1) / 2; }
  std::size_t step_features() const { return pooled_height() * conv_maps.back(); }
};

inline void validate_config(const CrnnConfig& c) {
  if (c.conv_maps.size() != 3)
    throw std::invalid_argument("crnn uses exactly three convolution layers");
  for (std::size_t i = 1; i < c.conv_maps.size(); ++i)
    if (c.conv_maps[i] >= c.conv_maps[i - 1])
      throw std::invalid_argument("crnn feature maps must be strictly decreasing");
  if (c.in_channels != 1 && c.in_channels != 3)
    throw std::invalid_argument("crnn input channels must be 1 or 3");
  if (c.lstm_layers == 0 || c.lstm_hidden == 0 || c.classes < 2)
    throw std::invalid_argument("crnn needs lstm layers, hidden units, and classes");
}

template <class T>
struct CrnnParams {
  struct ConvBlock {
    Tensor<T> w, b;
  };
  std::vector<ConvBlock> convs;        // 3
  std::vector<LstmParams<T>> lstms;    // lstm_layers
  Tensor<T> proj_w, proj_b;

  template <class Fn>
  void visit(Fn&& fn) {
    for (std::size_t i = 0; i < convs.size(); ++i) {
      fn(detail::cat("crnn.conv", i, ".weight"), convs[i].w, true);
      fn(detail::cat("crnn.conv", i, ".bias"), convs[i].b, true);
    }
    for (std::size_t i = 0; i < lstms.size(); ++i) {
      fn(detail::cat("crnn.lstm", i, ".w_fwd"), lstms[i].w_fwd, true);
      fn(detail::cat("crnn.lstm", i, ".b_fwd"), lstms[i].b_fwd, true);
      fn(detail::cat("crnn.lstm", i, ".w_bwd"), lstms[i].w_bwd, true);
      fn(detail::cat("crnn.lstm", i, ".b_bwd"), lstms[i].b_bwd, true);
    }
    fn(std::string("crnn.proj.weight"), proj_w, true);
    fn(std::string("crnn.proj.bias"), proj_b, true);
  }
};

namespace detail {

inline LstmSpec crnn_lstm_spec(const CrnnConfig& c, std::size_t layer) {
  std::size_t in = layer == 0 ? c.step_features() : 2 * c.lstm_hidden;
  return LstmSpec{in, c.lstm_hidden, true, true};
}

}  // namespace detail

template <class T>
CrnnParams<T> crnn_init(Rng& rng, const CrnnConfig& cfg) {
  validate_config(cfg);
  CrnnParams<T> p;
  std::size_t in_ch = cfg.in_channels;
  for (std::size_t maps : cfg.conv_maps) {
    typename CrnnParams<T>::ConvBlock blk;
    blk.w = glorot_uniform<T>(rng, {3, 3, in_ch, maps}, 9 * in_ch, 9 * maps);
    blk.b = Tensor<T>::zeros({maps});
    p.convs.push_back(std::move(blk));
    in_ch = maps;
  }
  for (std::size_t i = 0; i < cfg.lstm_layers; ++i)
    p.lstms.push_back(lstm_init<T>(rng, detail::crnn_lstm_spec(cfg, i)));
  std::size_t lstm_out = 2 * cfg.lstm_hidden;
  p.proj_w = glorot_uniform<T>(rng, {lstm_out, cfg.classes}, lstm_out, cfg.classes);
  p.proj_b = Tensor<T>::zeros({cfg.classes});
  return p;
}

/// Per-column class log-probabilities: (T, classes) for a single image,
/// (B, T, classes) for a batch. Grayscale inputs are replicated when the
/// config expects 3 channels.
template <class T>
Tensor<T> crnn_forward(const CrnnConfig& cfg, const CrnnParams<T>& params,
                       const Tensor<T>& x) {
  bool had_batch = x.rank() == 4;
  if (x.rank() != 3 && x.rank() != 4)
    throw std::invalid_argument("crnn_forward: input must be (H,W,1) or (B,H,W,1)");
  Tensor<T> h = had_batch ? x : reshape(x, {std::size_t(1), x.extent(0), x.extent(1),
                                            x.extent(2)});
  if (h.extent(1) != cfg.height || h.extent(2) != cfg.width || h.extent(3) != 1)
    throw std::invalid_argument(detail::cat("crnn_forward: input ",
                                            detail::shape_str(x.shape()),
                                            " does not match configured ", cfg.height,
                                            "x", cfg.width, "x1"));
  std::size_t batch = h.extent(0);
  if (cfg.in_channels == 3) h = concat<T>({h, h, h}, 3);
  std::size_t in_ch = cfg.in_channels;
  for (std::size_t i = 0; i < params.convs.size(); ++i) {
    ConvSpec spec;
    spec.in_channels = in_ch;
    spec.out_channels = cfg.conv_maps[i];
    h = relu(conv2d(h, spec, params.convs[i].w, params.convs[i].b));
    if (i < 2) h = maxpool2d(h, 2, 2, 2, 2);
    in_ch = cfg.conv_maps[i];
  }
  std::size_t hh = cfg.pooled_height(), ww = cfg.time_steps(), cc = cfg.conv_maps.back();
  h = permute(h, {0, 2, 1, 3});               // (B, W', H', C)
  h = reshape(h, {batch, ww, hh * cc});       // column features, left to right
  for (std::size_t i = 0; i < params.lstms.size(); ++i)
    h = lstm_forward(h, detail::crnn_lstm_spec(cfg, i), params.lstms[i]);
  h = dense(h, params.proj_w, params.proj_b);  // (B, T, classes)
  h = log_softmax(h);
  if (!had_batch) h = reshape(h, {ww, cfg.classes});
  return h;
}

inline std::vector<LayerRow> crnn_summary(const CrnnConfig& c) {
  std::vector<LayerRow> rows;
  std::size_t h = c.height, w = c.width;
  std::size_t in_ch = c.in_channels;
  for (std::size_t i = 0; i < c.conv_maps.size(); ++i) {
    ConvSpec spec;
    spec.in_channels = in_ch;
    spec.out_channels = c.conv_maps[i];
    rows.push_back({detail::cat("Conv2D(maps:", c.conv_maps[i], ", k:3x3, s:1, p:1)"),
                    detail::dims({h, w, c.conv_maps[i]}), conv_param_count(spec)});
    if (i < 2) {
      h = (h + 1) / 2;
      w = (w + 1) / 2;
      rows.push_back({"MaxPooling(2x2, s:2)", detail::dims({h, w, c.conv_maps[i]}), 0});
    }
    in_ch = c.conv_maps[i];
  }
  rows.push_back({"Columnize", detail::dims({c.time_steps(), c.step_features()}), 0});
  for (std::size_t i = 0; i < c.lstm_layers; ++i)
    rows.push_back({detail::cat("Bi-LSTM(hidden:", c.lstm_hidden, ")"),
                    detail::dims({c.time_steps(), 2 * c.lstm_hidden}),
                    lstm_param_count(detail::crnn_lstm_spec(c, i))});
  rows.push_back({"Dense+LogSoftmax", detail::dims({c.time_steps(), c.classes}),
                  dense_param_count(2 * c.lstm_hidden, c.classes)});
  return rows;
}

inline std::size_t crnn_param_count(const CrnnConfig& c) {
  return summary_total(crnn_summary(c));
}

}  // namespace expdate
