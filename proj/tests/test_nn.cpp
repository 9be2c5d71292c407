// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "expdate/expdate.hpp"
#include "test_util.hpp"

using namespace expdate;
using expdate::testing::expect_gradients_match;
using expdate::testing::GradCheck;

namespace {

ConvSpec spec_of(std::size_t in, std::size_t out, std::size_t stride) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.sh = s.sw = stride;
  return s;
}

}  // namespace

// --- parameter accounting ---------------------------------------------------

TEST(ParamCounts, EncoderConvRows) {
  EXPECT_EQ(conv_param_count(spec_of(1, 64, 2)), 640u);
  EXPECT_EQ(conv_param_count(spec_of(64, 128, 2)), 73856u);
  EXPECT_EQ(conv_param_count(spec_of(128, 256, 2)), 295168u);
  EXPECT_EQ(conv_param_count(spec_of(256, 512, 2)), 1180160u);
}

TEST(ParamCounts, DecoderDeconvRows) {
  EXPECT_EQ(conv_param_count(spec_of(64, 64, 2)), 36928u);
  EXPECT_EQ(conv_param_count(spec_of(64, 128, 2)), 73856u);
  EXPECT_EQ(conv_param_count(spec_of(128, 256, 1)), 295168u);
  EXPECT_EQ(conv_param_count(spec_of(256, 512, 1)), 1180160u);
  EXPECT_EQ(conv_param_count(spec_of(512, 1, 1)), 4609u);
}

TEST(ParamCounts, DenseRows) {
  EXPECT_EQ(dense_param_count(256, 1024), 263168u);
  EXPECT_EQ(dense_param_count(1024, 65536), 67174400u);
}

TEST(ParamCounts, LstmRows) {
  LstmSpec wide{32768, 256, true, true};
  EXPECT_EQ(lstm_param_count(wide), 67635200u);
  LstmSpec narrow{512, 128, true, false};
  EXPECT_EQ(lstm_param_count(narrow), 656384u);
  LstmSpec uni{10, 4, false, true};
  EXPECT_EQ(lstm_param_count(uni), 4 * ((10 + 4) * 4 + 4));
}

TEST(ParamCounts, BatchNorm) {
  EXPECT_EQ(batchnorm_state_count(64), 256u);
  EXPECT_EQ(batchnorm_trainable_count(64), 128u);
}

// --- conv2d -----------------------------------------------------------------

TEST(Conv2d, SameStrideOutputExtents) {
  Rng rng(1);
  ConvSpec s = spec_of(1, 3, 2);
  Tensor<double> x = Tensor<double>::randn(rng, {1, 64, 256, 1});
  Tensor<double> w = Tensor<double>::randn(rng, {3, 3, 1, 3});
  Tensor<double> b = Tensor<double>::zeros({3});
  Tensor<double> y = conv2d(x, s, w, b);
  EXPECT_EQ(y.shape(), (std::vector<std::size_t>{1, 32, 128, 3}));
}

TEST(Conv2d, OneByOneIsAffine) {
  ConvSpec s = spec_of(1, 1, 1);
  s.kh = s.kw = 1;
  Tensor<double> x({1, 1, 1, 1}, {3.0});
  Tensor<double> w({1, 1, 1, 1}, {2.0});
  Tensor<double> b({1}, {0.5});
  EXPECT_DOUBLE_EQ(conv2d(x, s, w, b).item(), 6.5);
}

TEST(Conv2d, HandComputedWindow) {
  // 2x2 valid convolution over a 3x3 image, single channel.
  ConvSpec s = spec_of(1, 1, 1);
  s.kh = s.kw = 2;
  s.padding = Padding::valid;
  Tensor<double> x({1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor<double> w({2, 2, 1, 1}, {1, 10, 100, 1000});
  Tensor<double> b({1}, {0.0});
  Tensor<double> y = conv2d(x, s, w, b);
  EXPECT_EQ(y.shape(), (std::vector<std::size_t>{1, 2, 2, 1}));
  EXPECT_EQ(y.values(), (std::vector<double>{5421, 6532, 8754, 9865}));
}

TEST(Conv2d, ChannelMismatchRejected) {
  ConvSpec s = spec_of(2, 1, 1);
  Tensor<double> x = Tensor<double>::zeros({1, 4, 4, 3});
  Tensor<double> w = Tensor<double>::zeros({3, 3, 2, 1});
  Tensor<double> b = Tensor<double>::zeros({1});
  EXPECT_THROW(conv2d(x, s, w, b), std::invalid_argument);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  ConvSpec s = spec_of(2, 3, 2);
  std::vector<Tensor<double>> inputs = {Tensor<double>::randn(rng, {2, 5, 6, 2}),
                                        Tensor<double>::randn(rng, {3, 3, 2, 3}),
                                        Tensor<double>::randn(rng, {3})};
  expect_gradients_match(inputs, [&](const std::vector<Tensor<double>>& w) {
    Tensor<double> y = conv2d(w[0], s, w[1], w[2]);
    return reduce_sum(mul(y, sigmoid(y)));
  });
}

// --- conv2d_transpose ---------------------------------------------------------

TEST(ConvTranspose, UpsamplesByStride) {
  Rng rng(3);
  ConvSpec s = spec_of(64, 64, 2);
  Tensor<double> x = Tensor<double>::randn(rng, {1, 16, 64, 64});
  Tensor<double> w = Tensor<double>::randn(rng, {3, 3, 64, 64});
  Tensor<double> b = Tensor<double>::zeros({64});
  EXPECT_EQ(conv2d_transpose(x, s, w, b).shape(),
            (std::vector<std::size_t>{1, 32, 128, 64}));
  EXPECT_EQ(conv_param_count(s), 36928u);
}

TEST(ConvTranspose, StrideOneKeepsExtent) {
  Rng rng(4);
  ConvSpec s = spec_of(4, 6, 1);
  Tensor<double> x = Tensor<double>::randn(rng, {1, 8, 10, 4});
  Tensor<double> w = Tensor<double>::randn(rng, {3, 3, 6, 4});
  Tensor<double> b = Tensor<double>::zeros({6});
  EXPECT_EQ(conv2d_transpose(x, s, w, b).shape(),
            (std::vector<std::size_t>{1, 8, 10, 6}));
}

TEST(ConvTranspose, AdjointIdentity) {
  // <conv(x; W), y> == <x, conv_transpose(y; W)> with shared weights.
  Rng rng(5);
  for (std::size_t stride : {std::size_t(1), std::size_t(2)}) {
    ConvSpec fwd = spec_of(3, 5, stride);
    std::size_t h = 6, w = 8;
    std::size_t ho = (h + stride - 1) / stride, wo = (w + stride - 1) / stride;
    Tensor<double> x = Tensor<double>::randn(rng, {2, h, w, 3});
    Tensor<double> y = Tensor<double>::randn(rng, {2, ho, wo, 5});
    Tensor<double> weights = Tensor<double>::randn(rng, {3, 3, 3, 5});
    Tensor<double> zero_out = Tensor<double>::zeros({5});
    Tensor<double> zero_in = Tensor<double>::zeros({3});

    double lhs = reduce_sum(mul(conv2d(x, fwd, weights, zero_out), y)).item();
    // The transpose reads the same tensor as (kh, kw, out, in).
    ConvSpec bwd = spec_of(5, 3, stride);
    double rhs =
        reduce_sum(mul(conv2d_transpose(y, bwd, weights, zero_in), x)).item();
    EXPECT_NEAR(lhs, rhs, 1e-6 * std::max({1.0, std::fabs(lhs), std::fabs(rhs)}))
        << "stride " << stride;
  }
}

TEST(ConvTranspose, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  ConvSpec s = spec_of(2, 3, 2);
  std::vector<Tensor<double>> inputs = {Tensor<double>::randn(rng, {1, 3, 4, 2}),
                                        Tensor<double>::randn(rng, {3, 3, 3, 2}),
                                        Tensor<double>::randn(rng, {3})};
  expect_gradients_match(inputs, [&](const std::vector<Tensor<double>>& w) {
    Tensor<double> y = conv2d_transpose(w[0], s, w[1], w[2]);
    return reduce_sum(mul(y, tanh(y)));
  });
}

// --- maxpool2d ----------------------------------------------------------------

TEST(MaxPool, TwoByTwoWindow) {
  Tensor<double> x({1, 2, 2, 1}, {1, 2, 3, 4});
  Tensor<double> y = maxpool2d(x, 2, 2, 2, 2);
  EXPECT_EQ(y.shape(), (std::vector<std::size_t>{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.item(), 4.0);
}

TEST(MaxPool, TableFourShape) {
  Tensor<double> x = Tensor<double>::zeros({1, 64, 256, 16});
  EXPECT_EQ(maxpool2d(x, 2, 2, 2, 2).shape(),
            (std::vector<std::size_t>{1, 32, 128, 16}));
}

TEST(MaxPool, TieRoutesGradientToFirstElement) {
  Tape<double> tape;
  Tensor<double> x = tape.watch(Tensor<double>::full({1, 2, 2, 1}, 7.0));
  Gradients<double> g = tape.backward(reduce_sum(maxpool2d(x, 2, 2, 2, 2)));
  EXPECT_EQ(g.at(x).values(), (std::vector<double>{1, 0, 0, 0}));
}

TEST(MaxPool, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  Tensor<double> x = Tensor<double>::randn(rng, {2, 4, 6, 3});
  expect_gradients_match({x}, [](const std::vector<Tensor<double>>& w) {
    return reduce_sum(mul(maxpool2d(w[0], 2, 2, 2, 2), 1.5));
  });
}

// --- batchnorm -----------------------------------------------------------------

TEST(BatchNorm, TrainModeNormalizes) {
  Rng rng(8);
  BatchNormState<double> state = BatchNormState<double>::make(3);
  state.epsilon = 1e-12;
  Tensor<double> x = add(mul(Tensor<double>::randn(rng, {50, 3}), 2.5), 4.0);
  Tensor<double> y = batchnorm(x, state, RunMode::train);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < 50; ++i) mean += y.data()[i * 3 + c];
    mean /= 50;
    for (std::size_t i = 0; i < 50; ++i) {
      double d = y.data()[i * 3 + c] - mean;
      var += d * d;
    }
    var /= 50;
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(var, 1.0, 1e-5);
  }
}

TEST(BatchNorm, InferModeIsIdentityUnderUnitStats) {
  BatchNormState<float> state = BatchNormState<float>::make(2);
  Tensor<float> x({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor<float> y = batchnorm(x, state, RunMode::infer);
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_NEAR(y.data()[i], x.data()[i], 5e-3);  // identity up to epsilon
}

TEST(BatchNorm, InferModeIgnoresBatchStatistics) {
  BatchNormState<double> state = BatchNormState<double>::make(1);
  state.running_mean = Tensor<double>({1}, {2.0});
  state.running_var = Tensor<double>({1}, {4.0});
  Tensor<double> batch_a({2, 1}, {0.0, 10.0});
  Tensor<double> batch_b({2, 1}, {-50.0, 10.0});
  Tensor<double> ya = batchnorm(batch_a, state, RunMode::infer);
  Tensor<double> yb = batchnorm(batch_b, state, RunMode::infer);
  EXPECT_DOUBLE_EQ(ya.data()[1], yb.data()[1]);  // same input value, same output
}

TEST(BatchNorm, TrainModeUpdatesRunningStats) {
  BatchNormState<double> state = BatchNormState<double>::make(1);
  state.momentum = 0.9;
  Tensor<double> x({4, 1}, {2, 2, 6, 6});  // mean 4, biased var 4
  (void)batchnorm(x, state, RunMode::train);
  EXPECT_NEAR(state.running_mean.item(), 0.9 * 0.0 + 0.1 * 4.0, 1e-12);
  EXPECT_NEAR(state.running_var.item(), 0.9 * 1.0 + 0.1 * 4.0, 1e-12);
}

TEST(BatchNorm, EmptyBatchRejectedInTrainMode) {
  BatchNormState<double> state = BatchNormState<double>::make(2);
  Tensor<double> x({0, 2}, std::vector<double>{});
  EXPECT_THROW(batchnorm(x, state, RunMode::train), std::invalid_argument);
}

TEST(BatchNorm, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  std::vector<Tensor<double>> inputs = {Tensor<double>::randn(rng, {6, 2}),
                                        Tensor<double>::randn(rng, {2}),
                                        Tensor<double>::randn(rng, {2})};
  expect_gradients_match(inputs, [](const std::vector<Tensor<double>>& w) {
    BatchNormState<double> state = BatchNormState<double>::make(2);
    state.gamma = w[1];
    state.beta = w[2];
    Tensor<double> y = batchnorm(w[0], state, RunMode::train);
    return reduce_sum(mul(y, sigmoid(y)));
  });
}

// --- dense ----------------------------------------------------------------------

TEST(Dense, IdentityWeights) {
  Tensor<double> x({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<double> w({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor<double> b = Tensor<double>::zeros({3});
  EXPECT_EQ(dense(x, w, b).values(), x.values());
}

TEST(Dense, AppliesToTrailingAxis) {
  Rng rng(10);
  Tensor<double> x = Tensor<double>::randn(rng, {2, 5, 3});
  Tensor<double> w = Tensor<double>::randn(rng, {3, 4});
  Tensor<double> b = Tensor<double>::randn(rng, {4});
  Tensor<double> y = dense(x, w, b);
  EXPECT_EQ(y.shape(), (std::vector<std::size_t>{2, 5, 4}));
  // Row (1, 2, :) equals the plain 2-D product of that row.
  Tensor<double> row = reshape(slice(x, {1, 2, 0}, {1, 1, 3}), {1, 3});
  Tensor<double> want = add(matmul(row, w), b);
  for (std::size_t j = 0; j < 4; ++j)
    EXPECT_NEAR(y.data()[(1 * 5 + 2) * 4 + j], want.data()[j], 1e-12);
}

TEST(Dense, ShapeMismatchRejected) {
  Tensor<double> x = Tensor<double>::zeros({2, 3});
  Tensor<double> w = Tensor<double>::zeros({4, 5});
  Tensor<double> b = Tensor<double>::zeros({5});
  EXPECT_THROW(dense(x, w, b), std::invalid_argument);
}

TEST(Dense, GradientsMatchFiniteDifferences) {
  Rng rng(11);
  std::vector<Tensor<double>> inputs = {Tensor<double>::randn(rng, {4, 3}),
                                        Tensor<double>::randn(rng, {3, 2}),
                                        Tensor<double>::randn(rng, {2})};
  expect_gradients_match(inputs, [](const std::vector<Tensor<double>>& w) {
    return reduce_sum(tanh(dense(w[0], w[1], w[2])));
  });
}

// --- dropout ---------------------------------------------------------------------

TEST(Dropout, InferModeIsIdentity) {
  Rng rng(12);
  Tensor<double> x = Tensor<double>::randn(rng, {10});
  Tensor<double> y = dropout(x, 0.9, RunMode::infer, rng);
  EXPECT_EQ(y.values(), x.values());
}

TEST(Dropout, RateZeroTrainIsIdentity) {
  Rng rng(13);
  Tensor<double> x = Tensor<double>::randn(rng, {10});
  EXPECT_EQ(dropout(x, 0.0, RunMode::train, rng).values(), x.values());
}

TEST(Dropout, RateOneRejected) {
  Rng rng(14);
  Tensor<double> x = Tensor<double>::zeros({4});
  EXPECT_THROW(dropout(x, 1.0, RunMode::train, rng), std::invalid_argument);
  EXPECT_THROW(dropout(x, -0.1, RunMode::train, rng), std::invalid_argument);
}

TEST(Dropout, SurvivorFractionAndScaling) {
  Rng rng(15);
  const std::size_t n = 100000;
  Tensor<double> x = Tensor<double>::full({n}, 1.0);
  Tensor<double> y = dropout(x, 0.5, RunMode::train, rng);
  std::size_t survivors = 0;
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (y.data()[i] != 0.0) {
      ++survivors;
      EXPECT_DOUBLE_EQ(y.data()[i], 2.0);  // 1 / (1 - rate)
    }
    sum += y.data()[i];
  }
  double fraction = static_cast<double>(survivors) / n;
  EXPECT_GE(fraction, 0.49);
  EXPECT_LE(fraction, 0.51);
  EXPECT_NEAR(sum / n, 1.0, 0.02);  // E[output] matches E[input] within 2%
}

TEST(Dropout, GradientsMatchFiniteDifferences) {
  Rng rng(16);
  Tensor<double> x = Tensor<double>::randn(rng, {8});
  expect_gradients_match({x}, [](const std::vector<Tensor<double>>& w) {
    Rng mask_rng(77);  // same mask for every evaluation
    Tensor<double> y = dropout(w[0], 0.4, RunMode::train, mask_rng);
    return reduce_sum(mul(y, y));
  });
}

// --- lstm -------------------------------------------------------------------------

TEST(Lstm, ZeroParamsGiveZeroOutput) {
  LstmSpec spec{3, 4, true, true};
  LstmParams<double> p;
  p.w_fwd = Tensor<double>::zeros({7, 16});
  p.b_fwd = Tensor<double>::zeros({16});
  p.w_bwd = Tensor<double>::zeros({7, 16});
  p.b_bwd = Tensor<double>::zeros({16});
  Rng rng(17);
  Tensor<double> x = Tensor<double>::randn(rng, {5, 3});
  Tensor<double> y = lstm_forward(x, spec, p);
  EXPECT_EQ(y.shape(), (std::vector<std::size_t>{5, 8}));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_DOUBLE_EQ(y.data()[i], 0.0);
}

TEST(Lstm, OutputShapes) {
  Rng rng(18);
  LstmSpec seq{6, 5, true, true};
  LstmParams<double> p = lstm_init<double>(rng, seq);
  Tensor<double> x = Tensor<double>::randn(rng, {2, 7, 6});  // (B, T, n)
  EXPECT_EQ(lstm_forward(x, seq, p).shape(), (std::vector<std::size_t>{2, 7, 10}));
  LstmSpec last = seq;
  last.return_sequences = false;
  EXPECT_EQ(lstm_forward(x, last, p).shape(), (std::vector<std::size_t>{2, 10}));
  LstmSpec uni{6, 5, false, true};
  LstmParams<double> pu = lstm_init<double>(rng, uni);
  EXPECT_EQ(lstm_forward(x, uni, pu).shape(), (std::vector<std::size_t>{2, 7, 5}));
}

TEST(Lstm, EmptySequenceRejected) {
  Rng rng(19);
  LstmSpec spec{3, 2, false, true};
  LstmParams<double> p = lstm_init<double>(rng, spec);
  Tensor<double> x({0, 3}, std::vector<double>{});
  EXPECT_THROW(lstm_forward(x, spec, p), std::invalid_argument);
}

TEST(Lstm, FeatureWidthMismatchRejected) {
  Rng rng(20);
  LstmSpec spec{3, 2, false, true};
  LstmParams<double> p = lstm_init<double>(rng, spec);
  Tensor<double> x = Tensor<double>::randn(rng, {4, 5});
  EXPECT_THROW(lstm_forward(x, spec, p), std::invalid_argument);
}

TEST(Lstm, ForgetBiasInitialization) {
  Rng rng(21);
  LstmSpec spec{3, 4, false, true};
  LstmParams<double> p = lstm_init<double>(rng, spec);
  for (std::size_t i = 0; i < 16; ++i)
    EXPECT_DOUBLE_EQ(p.b_fwd.data()[i], (i >= 4 && i < 8) ? 1.0 : 0.0);
  double in_limit = std::sqrt(6.0 / (3.0 + 16.0));
  double rec_limit = std::sqrt(6.0 / 20.0);
  for (std::size_t r = 0; r < 7; ++r) {
    double limit = r < 3 ? in_limit : rec_limit;
    for (std::size_t k = 0; k < 16; ++k) {
      EXPECT_GE(p.w_fwd.data()[r * 16 + k], -limit);
      EXPECT_LE(p.w_fwd.data()[r * 16 + k], limit);
    }
  }
}

TEST(Lstm, GradientsMatchFiniteDifferences) {
  Rng rng(22);
  LstmSpec spec{3, 2, true, true};
  Tensor<double> x = Tensor<double>::randn(rng, {4, 3});
  Tensor<double> wf = mul(Tensor<double>::randn(rng, {5, 8}), 0.4);
  Tensor<double> bf = mul(Tensor<double>::randn(rng, {8}), 0.1);
  Tensor<double> wb = mul(Tensor<double>::randn(rng, {5, 8}), 0.4);
  Tensor<double> bb = mul(Tensor<double>::randn(rng, {8}), 0.1);
  expect_gradients_match({x, wf, bf, wb, bb},
                         [&](const std::vector<Tensor<double>>& w) {
                           LstmParams<double> p;
                           p.w_fwd = w[1];
                           p.b_fwd = w[2];
                           p.w_bwd = w[3];
                           p.b_bwd = w[4];
                           Tensor<double> y = lstm_forward(w[0], spec, p);
                           return reduce_sum(mul(y, y));
                         });
}

TEST(Lstm, FinalStepGradients) {
  Rng rng(23);
  LstmSpec spec{2, 2, true, false};
  Tensor<double> x = Tensor<double>::randn(rng, {3, 2});
  Tensor<double> wf = mul(Tensor<double>::randn(rng, {4, 8}), 0.4);
  Tensor<double> bf = mul(Tensor<double>::randn(rng, {8}), 0.1);
  Tensor<double> wb = mul(Tensor<double>::randn(rng, {4, 8}), 0.4);
  Tensor<double> bb = mul(Tensor<double>::randn(rng, {8}), 0.1);
  expect_gradients_match({x, wf, bf, wb, bb},
                         [&](const std::vector<Tensor<double>>& w) {
                           LstmParams<double> p;
                           p.w_fwd = w[1];
                           p.b_fwd = w[2];
                           p.w_bwd = w[3];
                           p.b_bwd = w[4];
                           Tensor<double> y = lstm_forward(w[0], spec, p);
                           return reduce_sum(sigmoid(y));
                         });
}

// --- layer summaries ----------------------------------------------------------------

TEST(Summary, TotalsAddUp) {
  std::vector<LayerRow> rows = {{"A", "(None, 1)", 10}, {"B", "(None, 2)", 0},
                                {"C", "(None, 3)", 32}};
  EXPECT_EQ(summary_total(rows), 42u);
}
