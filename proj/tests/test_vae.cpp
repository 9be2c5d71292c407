// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "expdate/expdate.hpp"
#include "test_util.hpp"

using namespace expdate;
using expdate::testing::expect_gradients_match;
using expdate::testing::GradCheck;

namespace {

// A few-hundred-parameter configuration small enough for exhaustive
// finite-difference checks of the whole model.
VaeConfig micro_config() {
  VaeConfig c;
  c.height = 8;
  c.width = 8;
  c.encoder_filters = {2, 3};
  c.encoder_strides = {2, 2};
  c.bilstm_hidden = {3, 2};
  c.dropout_rate = 0.0;
  c.latent_dim = 4;
  c.dec_h = 2;
  c.dec_w = 2;
  c.dec_c = 2;
  c.decoder_filters = {2, 3, 1};
  c.decoder_strides = {2, 2, 1};
  return c;
}

// Collects the trainable tensors of a parameter struct in visit order.
template <class Params>
std::vector<Tensor<double>> trainable_of(Params& params) {
  std::vector<Tensor<double>> out;
  params.visit([&](const std::string&, Tensor<double>& t, bool trainable) {
    if (trainable) out.push_back(t);
  });
  return out;
}

// Nudges every trainable tensor off its initialization so no ReLU input or
// pooling tie sits exactly at a non-differentiable point during the check.
template <class Params>
void jitter_trainable(Params& params, Rng& rng, double scale) {
  params.visit([&](const std::string&, Tensor<double>& t, bool trainable) {
    if (trainable)
      t = add(t, Tensor<double>::uniform(rng, t.shape(), -scale, scale));
  });
}

// Writes the watched copies back into a parameter struct, in visit order.
template <class Params>
void assign_trainable(Params& params, const std::vector<Tensor<double>>& w,
                      std::size_t first) {
  std::size_t k = first;
  params.visit([&](const std::string&, Tensor<double>& t, bool trainable) {
    if (trainable) t = w[k++];
  });
}

}  // namespace

// --- KL divergence -------------------------------------------------------------

TEST(KlDivergence, ZeroAtStandardNormal) {
  Tensor<double> mu = Tensor<double>::zeros({5});
  Tensor<double> lv = Tensor<double>::zeros({5});
  EXPECT_DOUBLE_EQ(kl_divergence(mu, lv).item(), 0.0);
  EXPECT_DOUBLE_EQ(
      kl_divergence(Tensor<double>::zeros({3, 7}), Tensor<double>::zeros({3, 7}))
          .item(),
      0.0);
}

TEST(KlDivergence, MatchesClosedFormOnRandomVectors) {
  Rng rng(51);
  for (int round = 0; round < 20; ++round) {
    std::size_t d = 1 + rng.uniform_int(32);
    Tensor<double> mu = Tensor<double>::randn(rng, {d});
    Tensor<double> lv = Tensor<double>::randn(rng, {d});
    double want = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double m = mu.data()[i], v = lv.data()[i];
      want += 0.5 * (m * m + std::exp(v) - 1.0 - v);
    }
    EXPECT_NEAR(kl_divergence(mu, lv).item(), want, 1e-10);
  }
}

TEST(KlDivergence, BatchedFormAveragesRows) {
  Rng rng(52);
  Tensor<double> mu = Tensor<double>::randn(rng, {4, 6});
  Tensor<double> lv = Tensor<double>::randn(rng, {4, 6});
  double want = 0.0;
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t i = 0; i < 6; ++i) {
      double m = mu.data()[b * 6 + i], v = lv.data()[b * 6 + i];
      want += 0.5 * (m * m + std::exp(v) - 1.0 - v) / 4.0;
    }
  EXPECT_NEAR(kl_divergence(mu, lv).item(), want, 1e-10);
}

TEST(KlDivergence, NonNegativeAndShapeChecked) {
  Rng rng(53);
  for (int round = 0; round < 10; ++round) {
    Tensor<double> mu = Tensor<double>::randn(rng, {16});
    Tensor<double> lv = Tensor<double>::randn(rng, {16});
    EXPECT_GE(kl_divergence(mu, lv).item(), 0.0);
  }
  EXPECT_THROW(kl_divergence(Tensor<double>::zeros({3}), Tensor<double>::zeros({4})),
               std::invalid_argument);
}

TEST(KlDivergence, GradientsMatchFiniteDifferences) {
  Rng rng(54);
  std::vector<Tensor<double>> inputs = {Tensor<double>::randn(rng, {2, 5}),
                                        Tensor<double>::randn(rng, {2, 5})};
  expect_gradients_match(inputs, [](const std::vector<Tensor<double>>& w) {
    return kl_divergence(w[0], w[1]);
  });
}

// --- ELBO ------------------------------------------------------------------------

TEST(ElboLoss, HalfGrayReconstructionIsLogTwoPerPixel) {
  Tensor<double> x = Tensor<double>::full({2, 4, 4, 1}, 0.5);
  Tensor<double> x_hat = Tensor<double>::full({2, 4, 4, 1}, 0.5);
  Tensor<double> mu = Tensor<double>::zeros({2, 3});
  Tensor<double> lv = Tensor<double>::zeros({2, 3});
  ElboLoss<double> loss = elbo_loss(x, x_hat, mu, lv);
  EXPECT_NEAR(loss.reconstruction.item(), 16.0 * std::log(2.0), 1e-9);
  EXPECT_DOUBLE_EQ(loss.kl.item(), 0.0);
  EXPECT_NEAR(loss.total.item(), loss.reconstruction.item() + loss.kl.item(), 1e-12);
}

TEST(ElboLoss, PerfectReconstructionCostsAlmostNothing) {
  Tensor<double> x({1, 2, 2, 1}, {0, 1, 1, 0});
  ElboLoss<double> loss =
      elbo_loss(x, x, Tensor<double>::zeros({1, 2}), Tensor<double>::zeros({1, 2}));
  // Predictions are clamped to 1e-7 / 1 − 1e-7, so the floor is 4·(−log(1−1e-7)).
  EXPECT_NEAR(loss.reconstruction.item(), 0.0, 1e-6);
  EXPECT_GT(loss.reconstruction.item(), 0.0);
}

TEST(ElboLoss, ExtremeConfidentMissStaysFinite) {
  Tensor<double> x({1, 1, 2, 1}, {1.0, 0.0});
  Tensor<double> x_hat({1, 1, 2, 1}, {0.0, 1.0});  // exactly wrong
  ElboLoss<double> loss =
      elbo_loss(x, x_hat, Tensor<double>::zeros({1, 2}), Tensor<double>::zeros({1, 2}));
  EXPECT_TRUE(std::isfinite(loss.total.item()));
  EXPECT_NEAR(loss.reconstruction.item(), -2.0 * std::log(1e-7), 1e-3);
}

TEST(ElboLoss, RejectsOutOfRangeReconstruction) {
  Tensor<double> x = Tensor<double>::full({1, 2, 2, 1}, 0.5);
  Tensor<double> bad = Tensor<double>::full({1, 2, 2, 1}, 1.25);
  Tensor<double> mu = Tensor<double>::zeros({1, 2});
  EXPECT_THROW(elbo_loss(x, bad, mu, mu), std::domain_error);
  Tensor<double> nan_hat = Tensor<double>::full({1, 2, 2, 1},
                                                std::nan(""));
  EXPECT_THROW(elbo_loss(x, nan_hat, mu, mu), std::domain_error);
  EXPECT_THROW(elbo_loss(x, Tensor<double>::full({1, 2, 3, 1}, 0.5), mu, mu),
               std::invalid_argument);
}

TEST(ElboLoss, GradientsMatchFiniteDifferences) {
  Rng rng(55);
  Tensor<double> x({2, 2, 2, 1}, {0, 1, 1, 0, 1, 1, 0, 0});
  std::vector<Tensor<double>> inputs = {Tensor<double>::randn(rng, {2, 2, 2, 1}),
                                        Tensor<double>::randn(rng, {2, 3}),
                                        Tensor<double>::randn(rng, {2, 3})};
  expect_gradients_match(inputs, [&](const std::vector<Tensor<double>>& w) {
    Tensor<double> x_hat = sigmoid(w[0]);
    return elbo_loss(x, x_hat, w[1], w[2]).total;
  });
}

// --- configuration -----------------------------------------------------------------

TEST(VaeConfig, PaperParameterTotals) {
  VaeConfig c = VaeConfig::paper();
  EXPECT_TRUE(validate_config(c).empty());
  EXPECT_EQ(encoder_param_count(c), 70371584u);
  EXPECT_EQ(decoder_param_count(c), 68765121u);
  EXPECT_EQ(encoder_param_count(c) + decoder_param_count(c), 139136705u);
  EXPECT_EQ(encoder_flat_width(c), 32768u);
}

TEST(VaeConfig, PaperSummaryRows) {
  const std::vector<LayerRow> want_enc = {
      {"InputLayer", "(None, 64, 256, 1)", 0},
      {"Conv2D", "(None, 32, 128, 64)", 640},
      {"BatchNormalization", "(None, 32, 128, 64)", 256},
      {"Conv2D", "(None, 16, 64, 128)", 73856},
      {"BatchNormalization", "(None, 16, 64, 128)", 512},
      {"Conv2D", "(None, 8, 32, 256)", 295168},
      {"BatchNormalization", "(None, 8, 32, 256)", 1024},
      {"Conv2D", "(None, 4, 16, 512)", 1180160},
      {"BatchNormalization", "(None, 4, 16, 512)", 2048},
      {"Flatten", "(None, 32768)", 0},
      {"Reshape", "(None, 1, 32768)", 0},
      {"Bidirectional", "(None, 1, 512)", 67635200},
      {"Dropout", "(None, 1, 512)", 0},
      {"Bidirectional", "(None, 256)", 656384},
      {"mean", "(None, 1024)", 263168},
      {"Variance", "(None, 1024)", 263168},
      {"Sampling", "(None, 1024)", 0},
  };
  std::vector<LayerRow> enc = encoder_summary(VaeConfig::paper());
  ASSERT_EQ(enc.size(), want_enc.size());
  for (std::size_t i = 0; i < want_enc.size(); ++i) {
    EXPECT_EQ(enc[i].name, want_enc[i].name) << "row " << i;
    EXPECT_EQ(enc[i].output_shape, want_enc[i].output_shape) << "row " << i;
    EXPECT_EQ(enc[i].params, want_enc[i].params) << "row " << i;
  }

  const std::vector<LayerRow> want_dec = {
      {"InputLayer", "(None, 1024)", 0},
      {"dense", "(None, 65536)", 67174400},
      {"reshape", "(None, 16, 64, 64)", 0},
      {"conv2d_transpose", "(None, 32, 128, 64)", 36928},
      {"conv2d_transpose", "(None, 64, 256, 128)", 73856},
      {"conv2d_transpose", "(None, 64, 256, 256)", 295168},
      {"conv2d_transpose", "(None, 64, 256, 512)", 1180160},
      {"conv2d_transpose", "(None, 64, 256, 1)", 4609},
  };
  std::vector<LayerRow> dec = decoder_summary(VaeConfig::paper());
  ASSERT_EQ(dec.size(), want_dec.size());
  for (std::size_t i = 0; i < want_dec.size(); ++i) {
    EXPECT_EQ(dec[i].name, want_dec[i].name) << "row " << i;
    EXPECT_EQ(dec[i].output_shape, want_dec[i].output_shape) << "row " << i;
    EXPECT_EQ(dec[i].params, want_dec[i].params) << "row " << i;
  }
}

TEST(VaeConfig, ToyValidatesCleanly) {
  VaeConfig c = VaeConfig::toy();
  EXPECT_TRUE(validate_config(c).empty());
  EXPECT_EQ(encoder_flat_width(c), 1024u);
}

TEST(VaeConfig, ViolationsRejected) {
  VaeConfig c = VaeConfig::toy();
  c.decoder_filters = {32, 16, 8, 4, 1};  // decreasing before the projection
  EXPECT_THROW(validate_config(c), std::invalid_argument);
  c = VaeConfig::toy();
  c.dec_h = 4;  // 4·4 ≠ 32
  EXPECT_THROW(validate_config(c), std::invalid_argument);
  c = VaeConfig::toy();
  c.bilstm_hidden = {32, 16, 8};
  EXPECT_THROW(validate_config(c), std::invalid_argument);
  c = VaeConfig::toy();
  c.dropout_rate = 1.0;
  EXPECT_THROW(validate_config(c), std::invalid_argument);
  c = VaeConfig::toy();
  c.latent_dim = 100;
  std::vector<std::string> warnings = validate_config(c);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("latent_dim 100"), std::string::npos);
}

// --- runtime behaviour ---------------------------------------------------------------

TEST(VaeModel, EncodeDecodeShapes) {
  Rng rng(56);
  VaeConfig cfg = VaeConfig::toy();
  VaeParams<float> params = vae_init<float>(rng, cfg);
  Tensor<float> x = Tensor<float>::uniform(rng, {3, 32, 128, 1}, 0.0f, 1.0f);
  auto [mu, lv] = encode(cfg, params, x, RunMode::train, rng);
  EXPECT_EQ(mu.shape(), (std::vector<std::size_t>{3, 64}));
  EXPECT_EQ(lv.shape(), (std::vector<std::size_t>{3, 64}));
  Tensor<float> y = decode(cfg, params, mu);
  EXPECT_EQ(y.shape(), (std::vector<std::size_t>{3, 32, 128, 1}));
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_GE(y.data()[i], 0.0f);
    EXPECT_LE(y.data()[i], 1.0f);
  }
  // Single-image form mirrors the batched one.
  Tensor<float> one = reshape(slice(x, {0, 0, 0, 0}, {1, 32, 128, 1}),
                              {32, 128, 1});
  auto [mu1, lv1] = encode(cfg, params, one, RunMode::infer, rng);
  EXPECT_EQ(mu1.shape(), (std::vector<std::size_t>{64}));
  EXPECT_EQ(decode(cfg, params, mu1).shape(),
            (std::vector<std::size_t>{32, 128, 1}));
  Tensor<float> bad = Tensor<float>::zeros({16, 64, 1});
  EXPECT_THROW(encode(cfg, params, bad, RunMode::infer, rng), std::invalid_argument);
}

TEST(VaeModel, ZeroEpsilonSamplesTheMean) {
  Rng rng(57);
  Tensor<double> mu = Tensor<double>::randn(rng, {2, 8});
  Tensor<double> lv = Tensor<double>::randn(rng, {2, 8});
  Tensor<double> z = sample_latent(mu, lv, Tensor<double>::zeros({2, 8}));
  for (std::size_t i = 0; i < z.size(); ++i)
    EXPECT_DOUBLE_EQ(z.data()[i], mu.data()[i]);
  EXPECT_THROW(sample_latent(mu, lv, Tensor<double>::zeros({2, 7})),
               std::invalid_argument);
}

TEST(VaeModel, ReparameterizationScalesWithLogVariance) {
  Tensor<double> mu({1, 2}, {1.0, -1.0});
  Tensor<double> lv({1, 2}, {0.0, std::log(4.0)});
  Tensor<double> eps({1, 2}, {1.0, 1.0});
  Tensor<double> z = sample_latent(mu, lv, eps);
  EXPECT_DOUBLE_EQ(z.data()[0], 2.0);   // 1 + 1·e⁰
  EXPECT_DOUBLE_EQ(z.data()[1], 1.0);   // −1 + 1·√4
}

TEST(VaeModel, DeterministicTranslationIsRepeatable) {
  Rng rng(58);
  VaeConfig cfg = VaeConfig::toy();
  VaeParams<float> params = vae_init<float>(rng, cfg);
  Tensor<float> x = Tensor<float>::uniform(rng, {32, 128, 1}, 0.0f, 1.0f);
  Rng r1(9), r2(10);
  Tensor<float> a = translate(cfg, params, x, true, r1);
  Tensor<float> b = translate(cfg, params, x, true, r2);
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a.data()[i], b.data()[i]);
}

TEST(VaeModel, DenseLatentHeadVariant) {
  Rng rng(59);
  VaeConfig cfg = VaeConfig::toy();
  cfg.latent_head = LatentHead::dense;
  VaeParams<float> params = vae_init<float>(rng, cfg);
  EXPECT_GT(params.head_w.size(), 0u);
  bool has_dense_head = false, has_lstm = false;
  params.visit([&](const std::string& name, Tensor<float>&, bool) {
    if (name == "encoder.head.weight") has_dense_head = true;
    if (name == "encoder.lstm1.w_fwd") has_lstm = true;
  });
  EXPECT_TRUE(has_dense_head);
  EXPECT_FALSE(has_lstm);
  Tensor<float> x = Tensor<float>::uniform(rng, {2, 32, 128, 1}, 0.0f, 1.0f);
  auto [mu, lv] = encode(cfg, params, x, RunMode::infer, rng);
  EXPECT_EQ(mu.shape(), (std::vector<std::size_t>{2, 64}));
  EXPECT_EQ(lv.shape(), (std::vector<std::size_t>{2, 64}));
}

// --- whole-model gradients -------------------------------------------------------------

TEST(ModelGradients, MicroVaeEndToEnd) {
  Rng rng(60);
  VaeConfig cfg = micro_config();
  VaeParams<double> canonical = vae_init<double>(rng, cfg);
  jitter_trainable(canonical, rng, 0.05);
  // The low-variance training init shrinks the latent enough to park decoder
  // pre-activations on ReLU kinks, where central differences measure the
  // half-slope. Checking at a unit-variance posterior keeps every kink clear
  // of the probe step without changing what is being differentiated.
  canonical.logvar_b = add(canonical.logvar_b,
                           Tensor<double>(std::vector<std::size_t>{cfg.latent_dim},
                                          std::vector<double>(cfg.latent_dim, 4.0)));
  Tensor<double> x = Tensor<double>::uniform(rng, {2, 8, 8, 1}, 0.0, 1.0);
  Tensor<double> target = Tensor<double>::uniform(rng, {2, 8, 8, 1}, 0.0, 1.0);
  Tensor<double> eps = Tensor<double>::randn(rng, {2, cfg.latent_dim});

  std::vector<Tensor<double>> inputs = {x};
  for (Tensor<double>& t : trainable_of(canonical)) inputs.push_back(t);

  GradCheck gc;
  gc.max_checks_per_input = 24;  // sampled coordinates keep the suite fast
  expect_gradients_match(
      inputs,
      [&](const std::vector<Tensor<double>>& w) {
        VaeParams<double> p = canonical;
        assign_trainable(p, w, 1);
        Rng unused(0);
        auto [mu, lv] = encode(cfg, p, w[0], RunMode::train, unused);
        Tensor<double> z = sample_latent(mu, lv, eps);
        Tensor<double> x_hat = decode(cfg, p, z);
        return elbo_loss(target, x_hat, mu, lv).total;
      },
      gc);
}

TEST(ModelGradients, MicroCrnnEndToEnd) {
  Rng rng(61);
  CrnnConfig cfg;
  cfg.height = 8;
  cfg.width = 8;
  cfg.conv_maps = {4, 3, 2};
  cfg.lstm_layers = 1;
  cfg.lstm_hidden = 2;
  CrnnParams<double> canonical = crnn_init<double>(rng, cfg);
  jitter_trainable(canonical, rng, 0.05);
  Tensor<double> x = Tensor<double>::uniform(rng, {1, 8, 8, 1}, 0.0, 1.0);
  std::vector<std::size_t> label = {3};  // time_steps() == 2 allows one symbol

  std::vector<Tensor<double>> inputs = {x};
  for (Tensor<double>& t : trainable_of(canonical)) inputs.push_back(t);

  GradCheck gc;
  gc.max_checks_per_input = 24;
  expect_gradients_match(
      inputs,
      [&](const std::vector<Tensor<double>>& w) {
        CrnnParams<double> p = canonical;
        assign_trainable(p, w, 1);
        Tensor<double> lp = crnn_forward(cfg, p, w[0]);
        return ctc_loss(reshape(lp, {cfg.time_steps(), cfg.classes}), label);
      },
      gc);
}
