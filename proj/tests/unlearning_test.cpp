#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fsu/training.hpp"
#include "fsu/unlearning.hpp"
#include "test_support.hpp"

namespace fsu {
namespace {

using testing::random_model;
using testing::random_vector;

LabeledDataset random_set(std::size_t n, std::size_t d, std::size_t c, std::uint64_t seed,
                          std::int64_t group = 0) {
  Rng rng(seed);
  LabeledDataset ds(d, c);
  for (std::size_t i = 0; i < n; ++i) ds.add({random_vector(d, rng), i % c, group + static_cast<std::int64_t>(i)});
  return ds;
}

UnlearnConfig quick_config(Strategy s) {
  UnlearnConfig cfg;
  cfg.strategy = s;
  cfg.epochs = 2;
  cfg.attack.steps = 3;
  cfg.attack.per_sample_count = 4;
  cfg.seed = 5;
  cfg.attack.seed = 6;
  return cfg;
}

TEST(Relabel, AlwaysWrongAndBinaryFlip) {
  const LabeledDataset f = random_set(50, 3, 7, 1);
  Rng rng(2);
  const auto r = random_relabel(f, 7, rng);
  ASSERT_EQ(r.samples.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(r.samples[i].true_label, f[i].label);
    EXPECT_NE(r.samples[i].wrong_label, f[i].label);
    EXPECT_EQ(r.samples[i].features, f[i].features);
  }
  const LabeledDataset b = random_set(20, 3, 2, 1);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r2(seed);
    for (const auto& s : random_relabel(b, 2, r2).samples) EXPECT_EQ(s.wrong_label, 1 - s.true_label);
  }
}

TEST(Relabel, UniformOverWrongLabels) {
  LabeledDataset f(1, 5);
  for (int i = 0; i < 10000; ++i) f.add({{0.0}, 0, i});
  Rng rng(3);
  std::vector<double> freq(5, 0.0);
  for (const auto& s : random_relabel(f, 5, rng).samples) freq[s.wrong_label] += 1e-4;
  EXPECT_EQ(freq[0], 0.0);
  for (std::size_t c = 1; c < 5; ++c) EXPECT_NEAR(freq[c], 0.25, 0.02);
}

TEST(Relabel, RejectsSingleClass) {
  LabeledDataset f(1, 1);
  f.add({{0.0}, 0, 0});
  Rng rng(1);
  EXPECT_THROW(random_relabel(f, 1, rng), LabelError);
}

TEST(Losses, MisAndAdvMatchScalarOracle) {
  const Classifier m = random_model(4, {6}, 5, 12);
  const LabeledDataset f = random_set(9, 4, 5, 13);
  Rng rng(14);
  const auto r = random_relabel(f, 5, rng);
  double expected = 0.0;
  for (const auto& s : r.samples) expected += testing::oracle_loss(m, s.features, s.wrong_label) / 9.0;
  EXPECT_NEAR(misclassification_loss(m, r), expected, 1e-12);

  AttackConfig cfg;
  cfg.steps = 4;
  cfg.per_sample_count = 3;
  const auto adv = generate_adversarial_set(m, f, cfg);
  double adv_expected = 0.0;
  for (const auto& a : adv) adv_expected += testing::oracle_loss(m, a.features, a.target_label) / 27.0;
  EXPECT_NEAR(adversarial_loss(m, adv), adv_expected, 1e-12);
  EXPECT_THROW(adversarial_loss(m, {}), ConfigError);
}

TEST(Fisher, TwoClassClosedForm) {
  // W = [[0.5], [-0.5]], b = 0; samples (x=1, wrong=1), (x=2, wrong=0).
  Classifier m(1, {}, 2);
  m.weight(0, 0, 0) = 0.5;
  m.weight(0, 1, 0) = -0.5;
  RelabeledForgetSet r{{{{1.0}, 0, 1}, {{2.0}, 1, 0}}};
  const auto f = compute_fisher(m, r);
  ASSERT_EQ(f.values.size(), 4u);
  EXPECT_NEAR(f.values[0], 0.29564199593148359, 1e-14);
  EXPECT_NEAR(f.values[1], 0.29564199593148359, 1e-14);
  EXPECT_NEAR(f.values[2], 0.27432799100356703, 1e-14);
  EXPECT_NEAR(f.values[3], 0.27432799100356703, 1e-14);
}

TEST(Fisher, ZeroInputColumnHasZeroImportance) {
  const Classifier m = random_model(3, {}, 4, 7);
  RelabeledForgetSet r;
  Rng rng(8);
  for (int k = 0; k < 10; ++k) {
    auto x = random_vector(3, rng);
    x[1] = 0.0;
    r.samples.push_back({x, 0, static_cast<std::size_t>(1 + k % 3)});
  }
  const auto f = compute_fisher(m, r);
  for (std::size_t o = 0; o < 4; ++o) EXPECT_EQ(f.values[o * 3 + 1], 0.0);
}

TEST(Fisher, OrderInvariantAndNonNegative) {
  const Classifier m = random_model(4, {5}, 3, 9);
  Rng rng(10);
  RelabeledForgetSet r;
  for (int k = 0; k < 12; ++k) r.samples.push_back({random_vector(4, rng), 0, static_cast<std::size_t>(1 + k % 2)});
  RelabeledForgetSet rev = r;
  std::reverse(rev.samples.begin(), rev.samples.end());
  const auto a = compute_fisher(m, r), b = compute_fisher(m, rev);
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    EXPECT_GE(a.values[k], 0.0);
    EXPECT_NEAR(a.values[k], b.values[k], 1e-15 + 1e-12 * a.values[k]);
  }
}

TEST(Ewc, KnownValues) {
  Classifier m(1, {}, 2);
  const ParameterSnapshot snap = m.parameters();
  FisherDiagonal f{{1.0, 2.0, 3.0, 4.0}};
  EXPECT_EQ(ewc_penalty(m, snap, f), 0.0);
  m.set_parameters(std::vector<double>{1.0, -1.0, 0.5, 0.0});
  EXPECT_DOUBLE_EQ(ewc_penalty(m, snap, f), 1.0 + 2.0 + 0.75);
  EXPECT_THROW(ewc_penalty(m, snap, FisherDiagonal{{1.0}}), ShapeError);
}

TEST(CombinedLoss, ExactValueAndProjections) {
  // logits (x, 0): CE(label 1) = ln(1 + e^x)
  Classifier m(1, {}, 2);
  m.weight(0, 0, 0) = 1.0;
  const ParameterSnapshot snap{{0.0, 0.0, 0.0, 0.0}};
  const FisherDiagonal f{{0.001, 0.0, 0.0, 0.0}};
  const RelabeledForgetSet r{{{{std::log(std::exp(1.0) - 1.0)}, 0, 1}}};
  const std::vector<AdversarialSample> adv{{{std::log(std::exp(2.0) - 1.0)}, 1, 0, 1}};
  EXPECT_NEAR(combined_loss(m, r, adv, snap, f, {0.1, 1.0, 1e3}), 3.1, 1e-12);  // 0.1*1 + 1*2 + 1e3*0.001
  EXPECT_NEAR(combined_loss(m, r, adv, snap, f, {1.0, 0.0, 0.0}), 1.0, 1e-12);
  EXPECT_NEAR(combined_loss(m, r, adv, snap, f, {0.0, 1.0, 0.0}), 2.0, 1e-12);
  EXPECT_NEAR(combined_loss(m, r, adv, snap, f, {0.0, 0.0, 1.0}), 0.001, 1e-15);
  // Zero-weighted terms are skipped, so an empty adversarial set is fine.
  EXPECT_NEAR(combined_loss(m, r, {}, snap, f, {1.0, 0.0, 0.0}), 1.0, 1e-12);
}

TEST(Strategy, ActiveWeightsAndNames) {
  const LossWeights w{0.2, 0.7, 50.0};
  const auto rl = active_weights(Strategy::random_label, w);
  EXPECT_EQ(rl.mis, 0.2);
  EXPECT_EQ(rl.adv + rl.ewc + rl.remain, 0.0);
  const auto a = active_weights(Strategy::adv, w);
  EXPECT_EQ(a.adv, 0.7);
  EXPECT_EQ(a.ewc, 0.0);
  EXPECT_EQ(active_weights(Strategy::adv_ela, w).ewc, 50.0);
  const auto ri = active_weights(Strategy::remain_involved, w);
  EXPECT_EQ(ri.mis, 1.0);
  EXPECT_EQ(ri.remain, 1.0);
  for (Strategy s : {Strategy::adv, Strategy::adv_ela, Strategy::random_label, Strategy::remain_involved})
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_THROW(parse_strategy("retrain"), ConfigError);
}

TEST(Unlearn, Defaults) {
  const UnlearnConfig cfg;
  EXPECT_EQ(cfg.epochs, 15u);
  EXPECT_EQ(cfg.batch_size, 16u);
  EXPECT_EQ(cfg.weights.mis, 0.1);
  EXPECT_EQ(cfg.weights.adv, 1.0);
  EXPECT_EQ(cfg.weights.ewc, 1e3);
  EXPECT_EQ(cfg.attack.per_sample_count, 20u);
  EXPECT_EQ(cfg.attack.steps, 50u);
}

TEST(Unlearn, InputErrors) {
  const Classifier m = random_model(3, {4}, 3, 1);
  const LabeledDataset f = random_set(5, 3, 3, 2);
  EXPECT_THROW(unlearn(m, f, quick_config(Strategy::remain_involved)), ConfigError);
  EXPECT_THROW(unlearn(m, LabeledDataset(3, 3), quick_config(Strategy::adv)), ConfigError);

  LabeledDataset overlap = random_set(6, 3, 3, 9, 100);
  overlap.add(f[2]);
  EXPECT_THROW(unlearn(m, f, quick_config(Strategy::remain_involved), overlap), ConfigError);

  UnlearnConfig zero = quick_config(Strategy::adv);
  zero.epochs = 0;
  EXPECT_THROW(unlearn(m, f, zero), ConfigError);
  UnlearnConfig nolr = quick_config(Strategy::adv);
  nolr.lr = 0.0;
  EXPECT_THROW(unlearn(m, f, nolr), ConfigError);
  EXPECT_THROW(unlearn(m, random_set(5, 4, 3, 2), quick_config(Strategy::adv)), ShapeError);
}

TEST(Unlearn, ReportsShapeOfEachStrategy) {
  const Classifier m = random_model(3, {4}, 3, 1);
  const LabeledDataset f = random_set(5, 3, 3, 2);
  const LabeledDataset remain = random_set(12, 3, 3, 3, 100);
  for (Strategy s : {Strategy::adv, Strategy::adv_ela, Strategy::random_label, Strategy::remain_involved}) {
    const auto res = unlearn(m, f, quick_config(s), remain);
    EXPECT_EQ(res.report.epochs.size(), 2u);
    EXPECT_EQ(res.report.forget_count, 5u);
    const bool adv = s == Strategy::adv || s == Strategy::adv_ela;
    EXPECT_EQ(res.report.adversarial_count, adv ? 20u : 0u);
    EXPECT_EQ(res.fisher.values.empty(), s != Strategy::adv_ela);
    EXPECT_EQ(res.report.remain_count, s == Strategy::remain_involved ? 12u : 0u);
    EXPECT_NE(res.model, m);
  }
}

TEST(Unlearn, FixedInputsMatchIndependentRegeneration) {
  const Classifier m = random_model(4, {6}, 5, 21);
  const LabeledDataset f = random_set(6, 4, 5, 22);
  const UnlearnConfig cfg = quick_config(Strategy::adv_ela);
  const auto res = unlearn(m, f, cfg);

  Rng rng(derive_seed(cfg.seed, "relabel"));
  const auto relabeled = random_relabel(f, 5, rng);
  EXPECT_EQ(res.relabeled, relabeled);
  const auto adv = generate_adversarial_set(m, f, cfg.attack);
  EXPECT_EQ(res.adversarial, adv);
  EXPECT_EQ(res.fisher.values, compute_fisher(m, relabeled).values);

  EXPECT_EQ(res.report.adversarial_checksum_before, checksum(adv));
  EXPECT_EQ(res.report.adversarial_checksum_after, res.report.adversarial_checksum_before);
  EXPECT_EQ(res.report.fisher_checksum_after, res.report.fisher_checksum_before);

  const auto shared = unlearn(m, f, cfg, std::nullopt, adv);
  EXPECT_EQ(shared.model, res.model);
  EXPECT_THROW(unlearn(m, f, cfg, std::nullopt, std::vector<AdversarialSample>(3, adv[0])), ConfigError);
}

TEST(Unlearn, Deterministic) {
  const Classifier m = random_model(4, {6}, 5, 21);
  const LabeledDataset f = random_set(6, 4, 5, 22);
  const UnlearnConfig cfg = quick_config(Strategy::adv_ela);
  EXPECT_EQ(unlearn(m, f, cfg).model, unlearn(m, f, cfg).model);
  UnlearnConfig other = cfg;
  other.seed = 99;
  EXPECT_NE(unlearn(m, f, cfg).model, unlearn(m, f, other).model);
}

TEST(Unlearn, FirstStepFollowsCombinedGradient) {
  // One full-pool batch, one epoch: Adam's first step is lr * g / (|g| + eps),
  // so each parameter moves by -lr * sign of the combined-loss gradient.
  const Classifier m = random_model(3, {4}, 3, 31);
  const LabeledDataset f = random_set(4, 3, 3, 32);
  UnlearnConfig cfg = quick_config(Strategy::adv);
  cfg.epochs = 1;
  cfg.batch_size = 1000;
  cfg.lr = 1e-3;
  const auto res = unlearn(m, f, cfg);

  Classifier probe = m;
  const auto g = testing::central_difference(
      [&](const std::vector<double>& theta) {
        probe.set_parameters(theta);
        return combined_loss(probe, res.relabeled, res.adversarial, {}, {}, {cfg.weights.mis, cfg.weights.adv, 0.0});
      },
      m.parameters().values, 1e-6);
  const auto before = m.parameters().values, after = res.model.parameters().values;
  int checked = 0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (std::abs(g[k]) < 1e-4) continue;
    EXPECT_NEAR(after[k] - before[k], g[k] > 0 ? -1e-3 : 1e-3, 1e-7) << "param " << k;
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(Unlearn, HeavyConsolidationPinsImportantParameters) {
  // Forget inputs are zero outside the first two columns, so most first-layer
  // weights carry no Fisher mass and stay free to move.
  const Classifier m = random_model(10, {8}, 4, 41);
  LabeledDataset f(10, 4);
  Rng rng(42);
  for (std::size_t i = 0; i < 20; ++i) {
    auto x = random_vector(2, rng);
    x.resize(10, 0.0);
    f.add({x, i % 4, static_cast<std::int64_t>(i)});
  }
  UnlearnConfig cfg = quick_config(Strategy::adv_ela);
  cfg.weights.ewc = 1e12;
  cfg.epochs = 15;
  const auto res = unlearn(m, f, cfg);

  const auto& fv = res.fisher.values;
  std::vector<std::size_t> idx(fv.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return fv[a] > fv[b]; });
  const auto before = m.parameters().values, after = res.model.parameters().values;
  std::vector<double> moves(fv.size());
  for (std::size_t k = 0; k < fv.size(); ++k) moves[k] = std::abs(after[k] - before[k]);
  std::vector<double> sorted_moves = moves;
  std::nth_element(sorted_moves.begin(), sorted_moves.begin() + sorted_moves.size() / 2, sorted_moves.end());
  const double median = sorted_moves[sorted_moves.size() / 2];
  const std::size_t top = std::max<std::size_t>(1, fv.size() / 100);
  for (std::size_t t = 0; t < top; ++t) EXPECT_LT(moves[idx[t]], median) << "param " << idx[t];
}

TEST(Unlearn, RandomLabelDegradesBinaryForgetAccuracy) {
  // Pretrain on separable two-class data, then push the forget set to the flipped labels.
  LabeledDataset train(2, 2);
  Rng rng(51);
  std::normal_distribution<double> n01(0.0, 0.5);
  for (int i = 0; i < 200; ++i) {
    const std::size_t y = static_cast<std::size_t>(i % 2);
    const double c = y == 0 ? -1.0 : 1.0;
    train.add({{c + n01(rng), c + n01(rng)}, y, i});
  }
  Classifier m = Classifier::initialized(2, {8}, 2, 52);
  train_classifier(m, train, {30, 16, 1e-2, 53});
  const ForgetSplit fs = select_forget(train, 10, 54);
  auto accuracy = [&](const Classifier& net) {
    double ok = 0;
    for (const Sample& s : fs.forget.samples()) ok += predict(net, s.features) == s.label;
    return ok / static_cast<double>(fs.forget.size());
  };
  ASSERT_GE(accuracy(m), 0.9);
  UnlearnConfig cfg = quick_config(Strategy::random_label);
  cfg.weights.mis = 1.0;
  cfg.epochs = 200;
  cfg.lr = 1e-2;
  const auto res = unlearn(m, fs.forget, cfg);
  EXPECT_LE(accuracy(res.model), 0.5);
  EXPECT_LT(res.report.epochs.back().mis, res.report.epochs.front().mis);
}

}  // namespace
}  // namespace fsu
