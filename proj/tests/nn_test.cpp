#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "dp2nilm/nn/layers.hpp"
#include "dp2nilm/nn/network.hpp"
#include "dp2nilm/nn/optim.hpp"
#include "oracles.hpp"

namespace dp2nilm::nn {
namespace {

using dp2nilm::testing::central_differences;
using dp2nilm::testing::max_relative_error;

NetworkSpec ToySpec() {
  NetworkSpec s;
  s.window_len = 24;
  s.appliance_count = 2;
  s.encoder_channels = {2, 2};
  s.encoder_downsample = 2;
  s.pooling_bins = {1, 2, 3, 6};
  s.kernel_size = 3;
  s.decoder_channels = 2;
  s.dropout_p = 0.1;
  return s;
}

Tensor RandomTensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> d(0.0, scale);
  for (double& v : t.data) v = d(rng);
  return t;
}

Tensor RandomBinary(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::bernoulli_distribution d(0.3);
  for (double& v : t.data) v = d(rng) ? 1.0 : 0.0;
  return t;
}

double Dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

TEST(NetworkSpecTest, ManifestSumsToParameterCount) {
  NetworkSpec spec;  // window 120, I=3, bins {1,2,3,6}, downsample 4
  ModelParams p = build_network(spec, 7);
  EXPECT_EQ(p.values.size(), manifest_size(p.manifest));
  std::size_t expected_offset = 0;
  for (const auto& e : p.manifest) {
    EXPECT_EQ(e.offset, expected_offset);
    expected_offset += e.size();
  }
  EXPECT_EQ(expected_offset, p.values.size());
}

TEST(NetworkSpecTest, SameSeedIsBitIdentical) {
  NetworkSpec spec;
  EXPECT_EQ(build_network(spec, 42), build_network(spec, 42));
  EXPECT_NE(build_network(spec, 42).values, build_network(spec, 43).values);
}

TEST(NetworkSpecTest, NonDividingBinIsConfigError) {
  NetworkSpec spec;  // reduced length 120 / 4 = 30
  spec.pooling_bins = {1, 2, 7};
  EXPECT_THROW(build_network(spec, 1), ConfigError);
}

TEST(NetworkSpecTest, InvalidSpecsRejected) {
  NetworkSpec spec;
  spec.encoder_downsample = 7;
  EXPECT_THROW(validate(spec), ConfigError);
  spec = NetworkSpec{};
  spec.dropout_p = 1.0;
  EXPECT_THROW(validate(spec), ConfigError);
  spec = NetworkSpec{};
  spec.encoder_downsample = 16;  // four pooling stages, only three available
  spec.window_len = 128;
  spec.pooling_bins = {1, 2, 4, 8};
  EXPECT_THROW(validate(spec), ConfigError);
}

TEST(NetworkSpecTest, TenfoldDownsampleFactorsIntoPoolStrides) {
  NetworkSpec spec;
  spec.encoder_downsample = 10;
  EXPECT_EQ(pool_strides(spec), (std::vector<std::size_t>{2, 5, 1}));
  EXPECT_NO_THROW(validate(spec));  // reduced length 12, bins {1,2,3,6}
}

TEST(ForwardTest, ZeroFinalLayerGivesOneHalf) {
  NetworkSpec spec;
  ModelParams p = build_network(spec, 3);
  for (double& v : p.view(p.entry(kDecoderOutLayer, "weight"))) v = 0.0;
  for (double& v : p.view(p.entry(kDecoderOutLayer, "bias"))) v = 0.0;
  Rng rng(11);
  Tensor x = RandomTensor({4, spec.window_len}, rng);
  Tensor out = forward(p, spec, x);
  ASSERT_EQ(out.shape, (Shape{4, 3, 120}));
  for (double v : out.data) EXPECT_EQ(v, 0.5);
}

TEST(ForwardTest, EvalModeIsDeterministic) {
  NetworkSpec spec;
  ModelParams p = build_network(spec, 3);
  Rng rng(12);
  Tensor x = RandomTensor({3, spec.window_len}, rng);
  EXPECT_EQ(forward(p, spec, x), forward(p, spec, x));
  // Eval mode ignores the seed.
  EXPECT_EQ(forward(p, spec, x, {false, 1}), forward(p, spec, x, {false, 2}));
}

TEST(ForwardTest, TrainModeDropoutIsSeeded) {
  NetworkSpec spec;
  ModelParams p = build_network(spec, 3);
  Rng rng(13);
  Tensor x = RandomTensor({2, spec.window_len}, rng);
  EXPECT_EQ(forward(p, spec, x, {true, 5}), forward(p, spec, x, {true, 5}));
  EXPECT_NE(forward(p, spec, x, {true, 5}), forward(p, spec, x, {true, 6}));
}

TEST(ForwardTest, RandomCasesStayInOpenUnitInterval) {
  Rng rng(2024);
  std::uniform_int_distribution<int> pick(0, 2);
  for (int trial = 0; trial < 100; ++trial) {
    NetworkSpec spec;
    const int variant = pick(rng);
    if (variant == 0) spec = ToySpec();
    if (variant == 1) {
      spec.window_len = 60;
      spec.encoder_channels = {4, 8, 8};
      spec.encoder_downsample = 2;
      spec.pooling_bins = {1, 3, 5};
    }
    if (variant == 2) {
      spec.encoder_channels = {4, 4, 8, 8};
      spec.encoder_downsample = 10;
    }
    ModelParams p = build_network(spec, rng());
    Tensor x = RandomTensor({2, spec.window_len}, rng, 2.0);
    Tensor out = forward(p, spec, x, {trial % 2 == 0, rng()});
    ASSERT_EQ(out.shape, (Shape{2, spec.appliance_count, spec.window_len}));
    for (double v : out.data) {
      ASSERT_TRUE(std::isfinite(v));
      ASSERT_GT(v, 0.0);
      ASSERT_LT(v, 1.0);
    }
  }
}

TEST(ForwardTest, ShapeMismatchThrows) {
  NetworkSpec spec;
  ModelParams p = build_network(spec, 1);
  EXPECT_THROW(forward(p, spec, Tensor({2, 100})), ShapeError);
  NetworkSpec other = spec;
  other.appliance_count = 2;
  EXPECT_THROW(forward(p, other, Tensor({2, 120})), ShapeError);
}

TEST(ForwardTest, InterpolatedParamsAreUsable) {
  NetworkSpec spec = ToySpec();
  ModelParams a = build_network(spec, 1), b = build_network(spec, 2);
  Rng rng(3);
  Tensor x = RandomTensor({2, spec.window_len}, rng);
  for (double alpha : {0.0, 0.25, 0.5, 1.0}) {
    Tensor out = forward(interpolate(a, b, alpha), spec, x);
    EXPECT_TRUE(out.all_finite());
  }
  EXPECT_EQ(interpolate(a, b, 1.0).values, a.values);
}

TEST(LossTest, HalfProbabilityGivesLn2) {
  NetworkSpec spec = ToySpec();
  ModelParams p = build_network(spec, 4);
  for (double& v : p.view(p.entry(kDecoderOutLayer, "weight"))) v = 0.0;
  for (double& v : p.view(p.entry(kDecoderOutLayer, "bias"))) v = 0.0;
  Rng rng(5);
  Tensor x = RandomTensor({3, spec.window_len}, rng);
  Tensor y = RandomBinary({3, 2, spec.window_len}, rng);
  EXPECT_NEAR(loss_and_grad(p, spec, x, y).loss, std::log(2.0), 1e-15);
}

TEST(LossTest, PerfectPredictionsHaveNearZeroLoss) {
  NetworkSpec spec = ToySpec();
  ModelParams p = build_network(spec, 4);
  for (double& v : p.view(p.entry(kDecoderOutLayer, "weight"))) v = 0.0;
  auto bias = p.view(p.entry(kDecoderOutLayer, "bias"));
  bias[0] = 40.0;   // appliance 0 always ON
  bias[1] = -40.0;  // appliance 1 always OFF
  Rng rng(5);
  Tensor x = RandomTensor({2, spec.window_len}, rng);
  Tensor y({2, 2, spec.window_len});
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t t = 0; t < spec.window_len; ++t) y(b, 0, t) = 1.0;
  }
  EXPECT_LE(loss_and_grad(p, spec, x, y).loss, 1e-6);
  EXPECT_LE(binary_cross_entropy(forward(p, spec, x), y), 1e-6);
}

TEST(LossTest, NonBinaryTargetsRejected) {
  NetworkSpec spec = ToySpec();
  ModelParams p = build_network(spec, 4);
  Tensor x({1, spec.window_len});
  Tensor y({1, 2, spec.window_len});
  y.data[3] = 0.5;
  EXPECT_THROW(loss_and_grad(p, spec, x, y), DataError);
}

TEST(LossTest, BatchLossIsMeanOfWindowLosses) {
  NetworkSpec spec = ToySpec();
  ModelParams p = build_network(spec, 8);
  Rng rng(9);
  Tensor x = RandomTensor({5, spec.window_len}, rng);
  Tensor y = RandomBinary({5, 2, spec.window_len}, rng);
  auto per = per_window_loss(p, spec, x, y);
  double mean = 0.0;
  for (double v : per) mean += v / per.size();
  EXPECT_NEAR(loss_and_grad(p, spec, x, y).loss, mean, 1e-13);
}

// Whole-network analytic gradient against central differences (h = 1e-5).
TEST(GradientTest, NetworkMatchesFiniteDifferences) {
  const NetworkSpec spec = ToySpec();
  Rng rng(77);
  ModelParams p = build_network(spec, 21);
  Tensor x = RandomTensor({3, spec.window_len}, rng);
  Tensor y = RandomBinary({3, 2, spec.window_len}, rng);
  for (bool train : {false, true}) {
    const ForwardMode mode{train, 99};
    auto analytic = loss_and_grad(p, spec, x, y, mode).grad.values;
    auto f = [&](const std::vector<double>& v) {
      ModelParams q = p;
      q.values = v;
      return loss_and_grad(q, spec, x, y, mode).loss;
    };
    auto numeric = central_differences(f, p.values, 1e-5);
    EXPECT_LE(max_relative_error(analytic, numeric), 1e-4) << "train=" << train;
  }
}

// Per-layer checks use the scalar loss <r, layer(x)> for random r.
class LayerGradientTest : public ::testing::Test {
 protected:
  Rng rng{123};
};

TEST_F(LayerGradientTest, Conv1d) {
  const std::size_t cin = 3, cout = 2, k = 5, len = 11;
  Tensor x = RandomTensor({2, cin, len}, rng);
  Tensor w = RandomTensor({cout, cin, k}, rng);
  Tensor b = RandomTensor({cout}, rng);
  Tensor r = RandomTensor({2, cout, len}, rng);
  std::vector<double> dw(w.size()), db(b.size());
  Tensor dx;
  conv1d_backward(x, w.data, r, k, dw, db, &dx);
  auto fw = [&](const std::vector<double>& v) { return Dot(conv1d_forward(x, v, b.data, cout, k), r); };
  auto fb = [&](const std::vector<double>& v) { return Dot(conv1d_forward(x, w.data, v, cout, k), r); };
  auto fx = [&](const std::vector<double>& v) {
    return Dot(conv1d_forward(Tensor(x.shape, v), w.data, b.data, cout, k), r);
  };
  EXPECT_LE(max_relative_error(dw, central_differences(fw, w.data)), 1e-4);
  EXPECT_LE(max_relative_error(db, central_differences(fb, b.data)), 1e-4);
  EXPECT_LE(max_relative_error(dx.data, central_differences(fx, x.data)), 1e-4);
}

TEST_F(LayerGradientTest, ConvTranspose1d) {
  const std::size_t cin = 3, cout = 2, s = 4, len = 5;
  Tensor x = RandomTensor({2, cin, len}, rng);
  Tensor w = RandomTensor({cin, cout, s}, rng);
  Tensor b = RandomTensor({cout}, rng);
  Tensor r = RandomTensor({2, cout, len * s}, rng);
  std::vector<double> dw(w.size()), db(b.size());
  Tensor dx;
  conv_transpose1d_backward(x, w.data, r, s, dw, db, &dx);
  auto fw = [&](const std::vector<double>& v) { return Dot(conv_transpose1d_forward(x, v, b.data, cout, s), r); };
  auto fb = [&](const std::vector<double>& v) { return Dot(conv_transpose1d_forward(x, w.data, v, cout, s), r); };
  auto fx = [&](const std::vector<double>& v) {
    return Dot(conv_transpose1d_forward(Tensor(x.shape, v), w.data, b.data, cout, s), r);
  };
  EXPECT_LE(max_relative_error(dw, central_differences(fw, w.data)), 1e-4);
  EXPECT_LE(max_relative_error(db, central_differences(fb, b.data)), 1e-4);
  EXPECT_LE(max_relative_error(dx.data, central_differences(fx, x.data)), 1e-4);
}

TEST_F(LayerGradientTest, PoolingAndUpsampling) {
  Tensor x = RandomTensor({2, 3, 12}, rng);
  {
    Tensor r = RandomTensor({2, 3, 4}, rng);
    std::vector<std::size_t> argmax;
    maxpool1d_forward(x, 3, argmax);
    Tensor dx = maxpool1d_backward(x.shape, r, argmax);
    auto f = [&](const std::vector<double>& v) {
      std::vector<std::size_t> a;
      return Dot(maxpool1d_forward(Tensor(x.shape, v), 3, a), r);
    };
    EXPECT_LE(max_relative_error(dx.data, central_differences(f, x.data)), 1e-4);
  }
  {
    Tensor r = RandomTensor({2, 3, 3}, rng);
    Tensor dx = avgpool1d_backward(x.shape, r, 4);
    auto f = [&](const std::vector<double>& v) { return Dot(avgpool1d_forward(Tensor(x.shape, v), 4), r); };
    EXPECT_LE(max_relative_error(dx.data, central_differences(f, x.data)), 1e-4);
  }
  {
    Tensor r = RandomTensor({2, 3, 36}, rng);
    Tensor dx = upsample_nearest_backward(r, 3);
    auto f = [&](const std::vector<double>& v) { return Dot(upsample_nearest_forward(Tensor(x.shape, v), 3), r); };
    EXPECT_LE(max_relative_error(dx.data, central_differences(f, x.data)), 1e-4);
  }
}

TEST(GradientTest, TrainModeIsBitReproducible) {
  NetworkSpec spec;
  ModelParams p = build_network(spec, 5);
  Rng rng(6);
  Tensor x = RandomTensor({4, spec.window_len}, rng);
  Tensor y = RandomBinary({4, 3, spec.window_len}, rng);
  auto a = loss_and_grad(p, spec, x, y, {true, 17});
  auto b = loss_and_grad(p, spec, x, y, {true, 17});
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad.values, b.grad.values);
  EXPECT_EQ(a.grad.sample_count, 4u);
}

ModelParams Scalar(double w) {
  ModelParams p;
  p.values = {w};
  p.manifest = {ParamEntry{"w", "weight", {1}, 0}};
  return p;
}

TEST(SgdTest, PlainStep) {
  ModelParams p = Scalar(1.0);
  OptimState opt = OptimState::for_params(p, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(sgd_step(p, Gradient{{0.5}, 1}, opt).values[0], 0.95);
}

TEST(SgdTest, MomentumAccumulates) {
  ModelParams p = Scalar(0.0);
  OptimState opt = OptimState::for_params(p, 1.0, 0.5);
  p = sgd_step(p, Gradient{{1.0}, 1}, opt);
  EXPECT_DOUBLE_EQ(p.values[0], -1.0);
  p = sgd_step(p, Gradient{{1.0}, 1}, opt);
  EXPECT_DOUBLE_EQ(p.values[0], -2.5);
}

TEST(SgdTest, ZeroGradientIsFixedPoint) {
  ModelParams p = Scalar(3.25);
  OptimState opt = OptimState::for_params(p, 0.1, 0.5);
  EXPECT_EQ(sgd_step(p, Gradient{{0.0}, 1}, opt), p);
}

TEST(SgdTest, LengthMismatchThrows) {
  ModelParams p = Scalar(1.0);
  OptimState opt = OptimState::for_params(p, 0.1, 0.5);
  EXPECT_THROW(sgd_step(p, Gradient{{1.0, 2.0}, 1}, opt), ShapeError);
}

}  // namespace
}  // namespace dp2nilm::nn
