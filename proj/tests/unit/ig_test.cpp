#include <gtest/gtest.h>

#include <cmath>

#include "attrib/integrated_gradients.hpp"
#include "test_util.hpp"

namespace attrib {
namespace {

using nn::LayerParams;
using nn::ModelGraph;
using testing::random_tensor;

nn::ModelMetadata meta(Shape input, std::size_t classes) {
  return {"test", std::move(input), classes, {}};
}

ModelGraph<double> linear_model(const Tensor<double>& w, double bias = 0.0) {
  return ModelGraph<double>(
      {nn::dense("fc", w.size(), 1)},
      {LayerParams<double>{w.reshaped({1, w.size()}), Tensor<double>(Shape{1}, bias)}},
      meta({3, 2, 2}, 1));
}

TEST(Baseline, Kinds) {
  const Tensor<double> image(Shape{2, 1, 2}, {1, 3, 2, 6});
  EXPECT_EQ(make_baseline(BaselineKind::kZeros, image).values(), (std::vector<double>(4, 0.0)));
  EXPECT_EQ(make_baseline(BaselineKind::kGray, image).values(), (std::vector<double>(4, 0.5)));
  EXPECT_EQ(make_baseline(BaselineKind::kChannelMean, image).values(),
            (std::vector<double>{2, 2, 4, 4}));
  EXPECT_EQ(baseline_from_string("mean"), BaselineKind::kChannelMean);
  EXPECT_THROW(baseline_from_string("black"), Error);
  EXPECT_EQ(riemann_rule_from_string("right"), RiemannRule::kRight);
  EXPECT_THROW(riemann_rule_from_string("left"), Error);
}

TEST(IntegratedGradients, BaselineEqualToInputGivesZero) {
  const auto model = nn::make_minivgg<double>(16, 3, 1);
  const auto image = random_tensor<double>({3, 16, 16}, 2, 0, 1);
  IgParams<double> p;
  p.baseline = image;
  p.steps = 8;
  const auto r = integrated_gradients(model, image, p);
  for (double v : r.attributions.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(r.completeness_gap, 0.0);
}

TEST(IntegratedGradients, LinearModelIsExactForAnySteps) {
  const auto w = random_tensor<double>({3, 2, 2}, 3);
  const auto x = random_tensor<double>({3, 2, 2}, 4);
  const auto model = linear_model(w, 0.7);
  for (std::size_t m : {1u, 2u, 7u, 50u, 300u}) {
    IgParams<double> p;
    p.steps = m;
    p.rule = m % 2 ? RiemannRule::kRight : RiemannRule::kMidpoint;
    const auto r = integrated_gradients(model, x, p);
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_NEAR(r.attributions[i], w[i] * x[i], 1e-14) << "m=" << m;
    }
    EXPECT_LE(r.completeness_gap, 1e-14) << "m=" << m;
  }
}

class StepLoopOracle : public ::testing::TestWithParam<RiemannRule> {};

TEST_P(StepLoopOracle, Matches) {
  const auto model = nn::make_minivgg<double>(16, 3, 5);
  const auto x = random_tensor<double>({3, 16, 16}, 6, 0, 1);
  IgParams<double> p;
  p.baseline_kind = BaselineKind::kGray;
  p.rule = GetParam();
  const auto r = integrated_gradients(model, x, p);
  const Tensor<double> base(x.shape(), 0.5);

  Tensor<double> avg(x.shape());
  for (std::size_t k = 1; k <= 50; ++k) {
    const double alpha = GetParam() == RiemannRule::kRight ? k / 50.0 : (k - 0.5) / 50.0;
    Tensor<double> point(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      point[i] = base[i] + alpha * (x[i] - base[i]);
    }
    const auto g = nn::gradient_wrt_input(model, nn::forward(model, point), r.target_class);
    for (std::size_t i = 0; i < x.size(); ++i) avg[i] += g[i] / 50.0;
  }
  double sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double expected = (x[i] - base[i]) * avg[i];
    ASSERT_NEAR(r.attributions[i], expected, 1e-6);
    sum += r.attributions[i];
  }
  const double delta = nn::class_logit(model, x, r.target_class) -
                       nn::class_logit(model, base, r.target_class);
  EXPECT_NEAR(r.completeness_gap, std::abs(sum - delta), 1e-12);
  EXPECT_EQ(r.target_class, nn::forward(model, x).predicted);
}

INSTANTIATE_TEST_SUITE_P(Rules, StepLoopOracle,
                         ::testing::Values(RiemannRule::kMidpoint, RiemannRule::kRight));

TEST(IntegratedGradients, SensitivityToTheOnlyPixelRead) {
  Tensor<double> w(Shape{3, 2, 2});
  w[5] = 2.0;
  const auto model = linear_model(w);
  Tensor<double> x(Shape{3, 2, 2});
  x[5] = 0.8;
  const auto r = integrated_gradients(model, x);
  EXPECT_NE(r.logit_input, r.logit_baseline);
  EXPECT_NE(r.attributions[5], 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i != 5) EXPECT_EQ(r.attributions[i], 0.0);
  }
}

TEST(IntegratedGradients, IdentityDenseLayerChangesNothing) {
  const auto base = nn::make_minivgg<double>(16, 3, 7);
  auto layers = base.layers();
  auto params = base.params();
  const std::size_t gap = base.find_layer("gap");
  Tensor<double> eye(Shape{8, 8});
  for (std::size_t i = 0; i < 8; ++i) eye[i * 8 + i] = 1.0;
  layers.insert(layers.begin() + static_cast<std::ptrdiff_t>(gap) + 1, nn::dense("identity", 8, 8));
  params.insert(params.begin() + static_cast<std::ptrdiff_t>(gap) + 1,
                LayerParams<double>{eye, Tensor<double>(Shape{8})});
  const ModelGraph<double> widened(layers, params, base.metadata());

  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto x = random_tensor<double>({3, 16, 16}, 20 + seed, 0, 1);
    const auto a = integrated_gradients(base, x);
    const auto b = integrated_gradients(widened, x);
    ASSERT_EQ(a.target_class, b.target_class);
    for (std::size_t i = 0; i < x.size(); ++i) {
      ASSERT_NEAR(a.attributions[i], b.attributions[i], 1e-6);
    }
  }
}

TEST(IntegratedGradients, ThreadCountDoesNotChangeBits) {
  const auto model = nn::make_miniresnet<double>(12, 3, 2);
  const auto x = random_tensor<double>({3, 12, 12}, 3, 0, 1);
  IgParams<double> p;
  p.steps = 13;
  const auto serial = integrated_gradients(model, x, p);
  p.threads = 4;
  const auto parallel = integrated_gradients(model, x, p);
  EXPECT_EQ(serial.attributions, parallel.attributions);
  EXPECT_EQ(serial.completeness_gap, parallel.completeness_gap);
}

TEST(IntegratedGradients, GapShrinksWithMoreSteps) {
  const auto model = nn::make_minivgg<double>(12, 3, 8);
  const auto x = random_tensor<double>({3, 12, 12}, 9, 0, 1);
  // Zero biases make the model positively homogeneous, so the path from a
  // zero baseline crosses no kinks; a gray baseline does.
  IgParams<double> coarse;
  coarse.steps = 4;
  coarse.baseline_kind = BaselineKind::kGray;
  IgParams<double> fine = coarse;
  fine.steps = 400;
  EXPECT_LT(completeness_gap(model, x, fine), completeness_gap(model, x, coarse));
}

TEST(IntegratedGradients, RejectsBadParameters) {
  const auto model = nn::make_minivgg<double>(8, 3, 1);
  const auto x = random_tensor<double>({3, 8, 8}, 1, 0, 1);
  IgParams<double> p;
  p.steps = 0;
  EXPECT_THROW(integrated_gradients(model, x, p), Error);
  p.steps = 5;
  p.baseline = Tensor<double>(Shape{3, 4, 4});
  EXPECT_THROW(integrated_gradients(model, x, p), Error);
  p.baseline.reset();
  p.target_class = 3;
  EXPECT_THROW(integrated_gradients(model, x, p), Error);
  EXPECT_THROW(integrated_gradients(model, random_tensor<double>({3, 9, 9}, 1), IgParams<double>{}),
               Error);
}

TEST(IntegratedGradients, FloatRunsAndIsFinite) {
  const auto model = nn::make_minivgg<float>(16, 3, 1);
  const auto x = random_tensor<float>({3, 16, 16}, 1, 0, 1);
  const auto r = integrated_gradients(model, x);
  EXPECT_EQ(r.attributions.shape(), x.shape());
  EXPECT_TRUE(std::isfinite(r.completeness_gap));
  EXPECT_GE(r.completeness_gap, 0.0);
}

}  // namespace
}  // namespace attrib
