#pragma once

// Forget-set-only unlearning: random relabelling, adversarial surrogate
// samples, Fisher-weighted elastic consolidation, and the two baselines.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fsu/attacks.hpp"
#include "fsu/data.hpp"
#include "fsu/error.hpp"
#include "fsu/model.hpp"
#include "fsu/rng.hpp"

namespace fsu {

struct RelabeledSample {
  std::vector<double> features;
  std::size_t true_label = 0;
  std::size_t wrong_label = 0;

  friend bool operator==(const RelabeledSample&, const RelabeledSample&) = default;
};

struct RelabeledForgetSet {
  std::vector<RelabeledSample> samples;

  std::vector<ExampleRef> examples() const {
    std::vector<ExampleRef> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({s.features, s.wrong_label});
    return out;
  }

  friend bool operator==(const RelabeledForgetSet&, const RelabeledForgetSet&) = default;
};

/// Per-parameter importance, aligned to the parameter enumeration.
struct FisherDiagonal {
  std::vector<double> values;
};

struct LossWeights {
  double mis = 0.1;    // lambda1
  double adv = 1.0;    // lambda2
  double ewc = 1e3;    // lambda3

  void validate() const {
    if (!(mis >= 0.0 && adv >= 0.0 && ewc >= 0.0))
      throw ConfigError("loss weights must be non-negative");
    if (mis == 0.0 && adv == 0.0 && ewc == 0.0) throw ConfigError("loss weights are all zero");
  }
};

enum class Strategy { adv, adv_ela, random_label, remain_involved };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::adv: return "adv";
    case Strategy::adv_ela: return "adv_ela";
    case Strategy::random_label: return "random_label";
    case Strategy::remain_involved: return "remain_involved";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  for (Strategy v : {Strategy::adv, Strategy::adv_ela, Strategy::random_label,
                     Strategy::remain_involved})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown strategy '" + std::string(s) +
                    "' (expected adv, adv_ela, random_label or remain_involved)");
}

struct UnlearnConfig {
  LossWeights weights;
  AttackConfig attack;
  std::size_t epochs = 15;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  Strategy strategy = Strategy::adv_ela;
  std::size_t forget_count = 10;  // N
  std::uint64_t seed = 0;         // relabel and shuffle streams derive from this

  void validate() const {
    if (epochs < 1) throw ConfigError("unlearn: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("unlearn: batch_size must be >= 1");
    if (forget_count < 1) throw ConfigError("unlearn: forget_count must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("unlearn: lr must be positive");
    weights.validate();
    attack.validate();
  }
};

// ---------------------------------------------------------------------------
// Loss components

/// One uniformly drawn wrong label per sample, fixed thereafter.
inline RelabeledForgetSet random_relabel(const LabeledDataset& forget_set, std::size_t class_count,
                                         Rng& rng) {
  if (class_count < 2) throw LabelError("no wrong label exists with fewer than 2 classes");
  RelabeledForgetSet out;
  out.samples.reserve(forget_set.size());
  for (const Sample& s : forget_set.samples()) {
    if (s.label >= class_count) throw LabelError("forget-set label out of range");
    out.samples.push_back({s.features, s.label, draw_wrong_label(s.label, class_count, rng)});
  }
  return out;
}

namespace detail {

inline double mean_cross_entropy(const Classifier& model, std::span<const ExampleRef> examples) {
  if (examples.empty()) throw ConfigError("loss over an empty sample set");
  double sum = 0.0;
  for (const ExampleRef& ex : examples) {
    model.check_label(ex.label);
    sum += cross_entropy(forward(model, ex.features), ex.label);
  }
  return sum / static_cast<double>(examples.size());
}

inline std::vector<ExampleRef> adversarial_examples(const std::vector<AdversarialSample>& adv) {
  std::vector<ExampleRef> out;
  out.reserve(adv.size());
  for (const auto& a : adv) out.push_back({a.features, a.target_label});
  return out;
}

}  // namespace detail

/// Mean cross-entropy against the wrong labels.
inline double misclassification_loss(const Classifier& model, const RelabeledForgetSet& relabeled) {
  return detail::mean_cross_entropy(model, relabeled.examples());
}

/// Mean cross-entropy of the adversarial samples against their targets.
inline double adversarial_loss(const Classifier& model, const std::vector<AdversarialSample>& adv) {
  return detail::mean_cross_entropy(model, detail::adversarial_examples(adv));
}

/// Empirical diagonal Fisher: mean over samples of the squared per-sample
/// gradient of CE(f(x_e), wrong_label).
inline FisherDiagonal compute_fisher(const Classifier& model, const RelabeledForgetSet& relabeled) {
  if (relabeled.samples.empty()) throw ConfigError("Fisher over an empty forget set");
  const std::size_t n = model.parameter_count();
  FisherDiagonal f{std::vector<double>(n, 0.0)};
  std::vector<double> g(n);
  const double inv = 1.0 / static_cast<double>(relabeled.samples.size());
  for (const auto& s : relabeled.samples) {
    std::fill(g.begin(), g.end(), 0.0);
    accumulate_param_gradient(model, {s.features, s.wrong_label}, 1.0, g);
    for (std::size_t k = 0; k < n; ++k) f.values[k] += g[k] * g[k] * inv;
  }
  return f;
}

/// sum_k F_k (theta_k - theta*_k)^2
inline double ewc_penalty(const Classifier& model, const ParameterSnapshot& snapshot,
                          const FisherDiagonal& fisher) {
  const auto theta = model.parameter_view();
  if (snapshot.values.size() != theta.size() || fisher.values.size() != theta.size())
    throw ShapeError("EWC snapshot/Fisher not aligned to the model parameters");
  double sum = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double d = theta[k] - snapshot.values[k];
    sum += fisher.values[k] * d * d;
  }
  return sum;
}

/// lambda1*L_mis + lambda2*L_adv + lambda3*L_ewc. Terms with a zero weight
/// are not evaluated.
inline double combined_loss(const Classifier& model, const RelabeledForgetSet& relabeled,
                            const std::vector<AdversarialSample>& adv,
                            const ParameterSnapshot& snapshot, const FisherDiagonal& fisher,
                            const LossWeights& w) {
  double total = 0.0;
  if (w.mis != 0.0) total += w.mis * misclassification_loss(model, relabeled);
  if (w.adv != 0.0) total += w.adv * adversarial_loss(model, adv);
  if (w.ewc != 0.0) total += w.ewc * ewc_penalty(model, snapshot, fisher);
  return total;
}

// ---------------------------------------------------------------------------
// Training

struct EpochLosses {
  std::size_t epoch = 0;  // 1-based
  double mis = 0.0;
  double adv = 0.0;
  double ewc = 0.0;
  double remain = 0.0;
  double total = 0.0;
};

struct UnlearnReport {
  Strategy strategy = Strategy::adv_ela;
  std::vector<EpochLosses> epochs;
  std::size_t forget_count = 0;
  std::size_t adversarial_count = 0;
  std::size_t remain_count = 0;
  std::uint64_t relabel_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t attack_seed = 0;
  // Checksums of the fixed training inputs, taken when they were built and
  // again after the last epoch.
  std::uint64_t adversarial_checksum_before = 0;
  std::uint64_t adversarial_checksum_after = 0;
  std::uint64_t fisher_checksum_before = 0;
  std::uint64_t fisher_checksum_after = 0;
};

struct UnlearnResult {
  Classifier model;
  UnlearnReport report;
  RelabeledForgetSet relabeled;
  std::vector<AdversarialSample> adversarial;
  FisherDiagonal fisher;
};

/// FNV-1a over the bit patterns of a sequence of doubles.
inline std::uint64_t checksum(std::span<const double> values, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (double v : values) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline std::uint64_t checksum(const std::vector<AdversarialSample>& adv) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& a : adv) {
    h = checksum(a.features, h);
    const double meta[] = {static_cast<double>(a.target_label), static_cast<double>(a.source_index),
                           static_cast<double>(a.replica_index)};
    h = checksum(meta, h);
  }
  return h;
}

/// Weights actually applied to (mis, adv, ewc, remain) for a strategy.
struct ActiveWeights {
  double mis = 0.0;
  double adv = 0.0;
  double ewc = 0.0;
  double remain = 0.0;
};

inline ActiveWeights active_weights(Strategy s, const LossWeights& w) {
  switch (s) {
    case Strategy::random_label: return {w.mis, 0.0, 0.0, 0.0};
    case Strategy::adv: return {w.mis, w.adv, 0.0, 0.0};
    case Strategy::adv_ela: return {w.mis, w.adv, w.ewc, 0.0};
    case Strategy::remain_involved: return {1.0, 0.0, 0.0, 1.0};
  }
  return {};
}

/// Runs one unlearning strategy on a copy of `model`.
///
/// The relabeled forget set, the adversarial set and the Fisher diagonal are
/// all built from the incoming (pre-unlearning) model and stay fixed for the
/// whole run. Each epoch shuffles the pooled samples (relabeled forget plus
/// adversarial or remain samples) and walks them in mini-batches; a batch
/// contributes the mean gradient of each sample kind it contains, weighted
/// per kind, plus the EWC gradient when active.
///
/// `adversarial` may carry a set already generated from this same model,
/// forget set and attack config (the sweep shares one between adv and
/// adv_ela); it must hold M samples per forget sample.
inline UnlearnResult unlearn(const Classifier& model, const LabeledDataset& forget_set,
                             const UnlearnConfig& cfg,
                             const std::optional<LabeledDataset>& remain_set = std::nullopt,
                             std::optional<std::vector<AdversarialSample>> adversarial = std::nullopt) {
  cfg.validate();
  if (forget_set.empty()) throw ConfigError("unlearn: forget set is empty");
  if (forget_set.feature_dim() != model.input_dim() ||
      forget_set.class_count() != model.class_count())
    throw ShapeError("unlearn: forget set does not match the model");
  const bool uses_remain = cfg.strategy == Strategy::remain_involved;
  if (uses_remain && !remain_set)
    throw ConfigError("unlearn: strategy remain_involved requires a remain set");
  if (uses_remain) {
    if (remain_set->empty()) throw ConfigError("unlearn: remain set is empty");
    if (remain_set->feature_dim() != model.input_dim() ||
        remain_set->class_count() != model.class_count())
      throw ShapeError("unlearn: remain set does not match the model");
    std::vector<Sample> f = forget_set.samples();
    std::sort(f.begin(), f.end());
    for (const Sample& s : remain_set->samples())
      if (std::binary_search(f.begin(), f.end(), s))
        throw ConfigError("unlearn: forget and remain sets overlap");
  }

  const ActiveWeights w = active_weights(cfg.strategy, cfg.weights);
  const bool uses_adv = cfg.strategy == Strategy::adv || cfg.strategy == Strategy::adv_ela;
  const bool uses_ewc = cfg.strategy == Strategy::adv_ela;

  UnlearnResult res{model, {}, {}, {}, {}};
  UnlearnReport& rep = res.report;
  rep.strategy = cfg.strategy;
  rep.relabel_seed = derive_seed(cfg.seed, "relabel");
  rep.shuffle_seed = derive_seed(cfg.seed, "shuffle");
  rep.attack_seed = cfg.attack.seed;

  Rng relabel_rng(rep.relabel_seed);
  res.relabeled = random_relabel(forget_set, model.class_count(), relabel_rng);
  const ParameterSnapshot snapshot = model.parameters();
  if (uses_adv) {
    if (adversarial) {
      if (adversarial->size() != forget_set.size() * cfg.attack.per_sample_count)
        throw ConfigError("unlearn: precomputed adversarial set has the wrong size");
      res.adversarial = std::move(*adversarial);
    } else {
      res.adversarial = generate_adversarial_set(model, forget_set, cfg.attack);
    }
  }
  if (uses_ewc) res.fisher = compute_fisher(model, res.relabeled);
  rep.adversarial_checksum_before = checksum(res.adversarial);
  rep.fisher_checksum_before = checksum(res.fisher.values);
  rep.forget_count = forget_set.size();
  rep.adversarial_count = res.adversarial.size();
  rep.remain_count = uses_remain ? remain_set->size() : 0;

  enum class Kind : std::uint8_t { forget, adversarial, remain };
  struct Entry {
    Kind kind;
    ExampleRef ex;
  };
  std::vector<Entry> pool;
  for (const auto& s : res.relabeled.samples) pool.push_back({Kind::forget, {s.features, s.wrong_label}});
  for (const auto& a : res.adversarial) pool.push_back({Kind::adversarial, {a.features, a.target_label}});
  if (uses_remain)
    for (const Sample& s : remain_set->samples()) pool.push_back({Kind::remain, {s.features, s.label}});

  const std::vector<ExampleRef> forget_ex = res.relabeled.examples();
  const std::vector<ExampleRef> adv_ex = detail::adversarial_examples(res.adversarial);
  const std::vector<ExampleRef> remain_ex = uses_remain ? remain_set->examples() : std::vector<ExampleRef>{};

  Classifier& net = res.model;
  const std::size_t n_params = net.parameter_count();
  AdamState adam(n_params);
  GradientVector grad{std::vector<double>(n_params)};
  Rng shuffle_rng(rep.shuffle_seed);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(pool.begin(), pool.end(), shuffle_rng);
    for (std::size_t start = 0; start < pool.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(pool.size(), start + cfg.batch_size);
      std::size_t counts[3] = {0, 0, 0};
      for (std::size_t k = start; k < end; ++k) ++counts[static_cast<int>(pool[k].kind)];
      const double kind_weight[3] = {w.mis, w.adv, w.remain};

      std::fill(grad.values.begin(), grad.values.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const int kind = static_cast<int>(pool[k].kind);
        const double scale = kind_weight[kind] / static_cast<double>(counts[kind]);
        if (scale != 0.0) accumulate_param_gradient(net, pool[k].ex, scale, grad.values);
      }
      if (uses_ewc && w.ewc != 0.0) {
        const auto theta = net.parameter_view();
        for (std::size_t p = 0; p < n_params; ++p)
          grad.values[p] += w.ewc * 2.0 * res.fisher.values[p] * (theta[p] - snapshot.values[p]);
      }
      detail::require_finite(grad.values, "unlearning gradient");
      optimizer_step(net, grad, adam, cfg.lr);
    }

    EpochLosses el;
    el.epoch = epoch;
    el.mis = detail::mean_cross_entropy(net, forget_ex);
    if (!adv_ex.empty()) el.adv = detail::mean_cross_entropy(net, adv_ex);
    if (uses_ewc) el.ewc = ewc_penalty(net, snapshot, res.fisher);
    if (uses_remain) el.remain = detail::mean_cross_entropy(net, remain_ex);
    el.total = w.mis * el.mis + w.adv * el.adv + w.ewc * el.ewc + w.remain * el.remain;
    rep.epochs.push_back(el);
  }

  rep.adversarial_checksum_after = checksum(res.adversarial);
  rep.fisher_checksum_after = checksum(res.fisher.values);
  return res;
}

}  // namespace fsu
