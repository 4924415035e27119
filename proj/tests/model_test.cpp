#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fsu/model.hpp"
#include "test_support.hpp"

namespace fsu {
namespace {

using testing::random_model;
using testing::random_vector;

TEST(Forward, ZeroModelIsUniform) {
  Classifier m(5, {8, 8}, 7);
  const auto p = forward(m, std::vector<double>{1, -2, 3, 0.5, 9});
  ASSERT_EQ(p.size(), 7u);
  for (double v : p) EXPECT_NEAR(v, 1.0 / 7.0, 1e-15);
}

TEST(Forward, MatchesScalarOracleOnHandWrittenSingleLayer) {
  Classifier m(3, {}, 4);
  const double w[4][3] = {{0.5, -1.0, 0.25}, {1.5, 0.0, -0.75}, {-0.2, 0.3, 0.9}, {0.0, 2.0, -1.0}};
  const double b[4] = {0.1, -0.3, 0.0, 0.7};
  for (int o = 0; o < 4; ++o) {
    for (int i = 0; i < 3; ++i) m.weight(0, o, i) = w[o][i];
    m.bias(0, o) = b[o];
  }
  const std::vector<double> x{0.3, -1.2, 2.0};
  const auto p = forward(m, x);
  const auto expected = testing::oracle_forward(m, x);
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(p[c], expected[c], 1e-14);
}

TEST(Forward, SoftmaxNormalisedOverRandomInputs) {
  Rng rng(11);
  const Classifier m = random_model(6, {16, 16}, 7, 3);
  for (int t = 0; t < 1000; ++t) {
    const auto x = random_vector(6, rng, 5.0);
    const auto p = forward(m, x);
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    EXPECT_NEAR(s, 1.0, 1e-9);
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Forward, RejectsWrongInputSize) {
  Classifier m(4, {3}, 7);
  EXPECT_THROW(forward(m, std::vector<double>(5, 0.0)), ShapeError);
}

TEST(Forward, ExtremeLogitsStayFinite) {
  Classifier m(1, {}, 3);
  m.weight(0, 0, 0) = 1e4;
  const auto p = forward(m, std::vector<double>{1e3});
  for (double v : p) EXPECT_TRUE(std::isfinite(v));
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_TRUE(std::isfinite(cross_entropy(p, 1)));
  EXPECT_NEAR(cross_entropy(p, 1), -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, KnownValues) {
  const std::vector<double> uniform(7, 1.0 / 7.0);
  for (std::size_t y = 0; y < 7; ++y) EXPECT_NEAR(cross_entropy(uniform, y), 1.945910149055313, 1e-12);
  EXPECT_EQ(cross_entropy(std::vector<double>{0.0, 1.0, 0.0}, 1), 0.0);
  EXPECT_NEAR(cross_entropy(std::vector<double>{0.7, 0.2, 0.1}, 1), 1.6094379124341003, 1e-12);
}

TEST(CrossEntropy, LabelOutOfRange) {
  EXPECT_THROW(cross_entropy(std::vector<double>{0.5, 0.5}, 2), LabelError);
}

TEST(GradParams, ZeroAtPerSampleOptimum) {
  // One-hot probabilities exactly: huge logit gap saturates softmax to 1.0.
  Classifier m(2, {}, 3);
  m.bias(0, 2) = 1e3;
  const std::vector<double> x1{0.5, -0.5}, x2{1.0, 2.0};
  const std::vector<ExampleRef> batch{{x1, 2}, {x2, 2}};
  const auto g = grad_params(m, batch);
  for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(GradParams, MatchesFiniteDifferences) {
  Rng rng(5);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Classifier m = random_model(4, {6, 5}, 3, seed);  // 83 parameters
    ASSERT_LE(m.parameter_count(), 200u);
    std::vector<std::pair<std::vector<double>, std::size_t>> batch;
    std::vector<ExampleRef> refs;
    for (int k = 0; k < 4; ++k) batch.emplace_back(random_vector(4, rng), static_cast<std::size_t>(k % 3));
    for (const auto& [x, y] : batch) refs.push_back({x, y});
    const auto analytic = grad_params(m, refs);
    const auto numeric = testing::fd_param_gradient(m, batch);
    EXPECT_LT(testing::max_relative_error(analytic.values, numeric), 1e-4) << "seed " << seed;
  }
}

TEST(GradParams, DuplicatedBatchKeepsMean) {
  Rng rng(8);
  const Classifier m = random_model(5, {7}, 4, 9);
  std::vector<std::vector<double>> xs;
  for (int k = 0; k < 5; ++k) xs.push_back(random_vector(5, rng));
  std::vector<ExampleRef> once, twice;
  for (std::size_t k = 0; k < xs.size(); ++k) once.push_back({xs[k], k % 4});
  twice = once;
  twice.insert(twice.end(), once.begin(), once.end());
  const auto a = grad_params(m, once);
  const auto b = grad_params(m, twice);
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-9);
}

TEST(GradParams, EmptyBatchAndShapeErrors) {
  Classifier m(3, {}, 2);
  EXPECT_THROW(grad_params(m, std::vector<ExampleRef>{}), ShapeError);
  const std::vector<double> x(4, 0.0);
  EXPECT_THROW(grad_params(m, std::vector<ExampleRef>{{x, 0}}), ShapeError);
}

TEST(GradInput, ZeroFirstLayerGivesZeroGradient) {
  Classifier m = random_model(5, {4}, 3, 2);
  const auto& l0 = m.layers()[0];
  for (std::size_t k = 0; k < l0.in * l0.out; ++k) m.parameter_view()[l0.offset + k] = 0.0;
  const auto g = grad_input(m, std::vector<double>{1, 2, 3, 4, 5}, 1);
  for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(GradInput, MatchesFiniteDifferences) {
  Rng rng(6);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Classifier m = random_model(6, {8, 8}, 5, 100 + seed);
    const auto x = random_vector(6, rng);
    const std::size_t y = seed % 5;
    const auto analytic = grad_input(m, x, y);
    const auto numeric = testing::fd_input_gradient(m, x, y);
    EXPECT_LT(testing::max_relative_error(analytic.values, numeric), 1e-4) << "seed " << seed;
  }
}

TEST(GradInput, SingleLayerClosedForm) {
  const Classifier m = random_model(4, {}, 3, 21);
  const std::vector<double> x{0.2, -0.7, 1.1, 0.05};
  const std::size_t y = 2;
  const auto p = testing::oracle_forward(m, x);
  // W^T (p - e_y)
  std::vector<double> expected(4, 0.0);
  Classifier copy = m;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) expected[i] += copy.weight(0, c, i) * (p[c] - (c == y ? 1.0 : 0.0));
  const auto g = grad_input(m, x, y);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(g.values[i], expected[i], 1e-14);
}

TEST(Flatten, RoundTripIsIdentity) {
  const Classifier m = random_model(5, {4, 3}, 7, 4);
  const auto theta = m.parameters();
  Classifier other(5, {4, 3}, 7);
  other.set_parameters(theta.values);
  EXPECT_EQ(other.parameters().values, theta.values);
  EXPECT_EQ(other, m);
  EXPECT_THROW(other.set_parameters(std::vector<double>(3, 0.0)), ShapeError);
}

TEST(Flatten, DocumentedOrder) {
  Classifier m(2, {3}, 2);
  // layer 0: W (3x2) at 0..5, b at 6..8; layer 1: W (2x3) at 9..14, b at 15..16
  ASSERT_EQ(m.parameter_count(), 17u);
  m.weight(0, 1, 0) = 1.0;
  m.bias(0, 2) = 2.0;
  m.weight(1, 1, 2) = 3.0;
  m.bias(1, 0) = 4.0;
  const auto v = m.parameters().values;
  EXPECT_EQ(v[2], 1.0);
  EXPECT_EQ(v[8], 2.0);
  EXPECT_EQ(v[14], 3.0);
  EXPECT_EQ(v[15], 4.0);
}

TEST(Init, GlorotRangeAndDeterminism) {
  const Classifier a = Classifier::initialized(16, {64, 64}, 7, 42);
  const Classifier b = Classifier::initialized(16, {64, 64}, 7, 42);
  EXPECT_EQ(a, b);
  for (const auto& l : a.layers()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (std::size_t k = 0; k < l.in * l.out; ++k) EXPECT_LE(std::abs(a.parameter_view()[l.offset + k]), limit);
    for (std::size_t o = 0; o < l.out; ++o) EXPECT_EQ(a.parameter_view()[l.bias_offset() + o], 0.0);
  }
  EXPECT_NE(a, Classifier::initialized(16, {64, 64}, 7, 43));
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Classifier m = random_model(3, {2}, 2, 1);
  const auto before = m.parameters().values;
  AdamState st(m.parameter_count());
  optimizer_step(m, GradientVector{std::vector<double>(m.parameter_count(), 0.0)}, st, 1e-3);
  EXPECT_EQ(m.parameters().values, before);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  Classifier m(1, {}, 2);
  const auto before = m.parameters().values;
  AdamState st(m.parameter_count());
  GradientVector g{std::vector<double>(m.parameter_count(), 0.5)};
  g.values[1] = -0.5;
  optimizer_step(m, g, st, 0.01);
  const auto after = m.parameters().values;
  EXPECT_NEAR(after[0] - before[0], -0.009999999800000003, 1e-17);
  EXPECT_NEAR(after[1] - before[1], 0.009999999800000003, 1e-17);
}

TEST(Adam, IdenticalSequencesAreBitIdentical) {
  Classifier a = random_model(4, {5}, 3, 7), b = a;
  AdamState sa(a.parameter_count()), sb(b.parameter_count());
  Rng rng(3);
  for (int k = 0; k < 25; ++k) {
    const GradientVector g{random_vector(a.parameter_count(), rng)};
    optimizer_step(a, g, sa, 1e-3);
    optimizer_step(b, g, sb, 1e-3);
  }
  EXPECT_EQ(a, b);
}

TEST(Adam, RejectsMisalignedGradientAndBadRate) {
  Classifier m(2, {}, 2);
  AdamState st(m.parameter_count());
  EXPECT_THROW(optimizer_step(m, GradientVector{{1.0}}, st, 1e-3), ShapeError);
  EXPECT_THROW(optimizer_step(m, GradientVector{std::vector<double>(m.parameter_count())}, st, 0.0), ConfigError);
}

TEST(Predict, TiesGoToLowestIndex) {
  Classifier m(2, {}, 4);
  m.bias(0, 1) = 1.0;
  m.bias(0, 3) = 1.0;
  EXPECT_EQ(predict(m, std::vector<double>{0, 0}), 1u);
  EXPECT_EQ(predict(Classifier(2, {}, 4), std::vector<double>{3, 4}), 0u);
}

}  // namespace
}  // namespace fsu
