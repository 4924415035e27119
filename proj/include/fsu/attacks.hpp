#pragma once

// Targeted PGD: random start inside the tau-ball, P signed-gradient steps
// toward the target label, projection back into the ball.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "fsu/data.hpp"
#include "fsu/error.hpp"
#include "fsu/model.hpp"
#include "fsu/rng.hpp"

namespace fsu {

enum class StepDirection {
  descend,  // x - sigma*sign(grad): moves toward the target label
  ascend,   // x + sigma*sign(grad): the literal "+" form, moves away from it
};

enum class ClipMode {
  every_step,  // project after every step and at the end
  final_only,  // project once after the last step
};

struct AttackConfig {
  double tau = 0.5;                    // l-inf radius
  std::optional<double> sigma;         // per-step size; unset means 2.5*tau/steps
  std::size_t steps = 50;              // P
  std::size_t per_sample_count = 20;   // M
  std::uint64_t seed = 0;
  StepDirection direction = StepDirection::descend;
  ClipMode clip = ClipMode::every_step;

  double step_size() const { return sigma ? *sigma : 2.5 * tau / static_cast<double>(steps); }

  void validate() const {
    if (!(tau > 0.0)) throw ConfigError("attack: tau must be positive");
    if (steps < 1) throw ConfigError("attack: steps must be >= 1");
    if (per_sample_count < 1) throw ConfigError("attack: per_sample_count must be >= 1");
    if (sigma && !(*sigma >= 0.0)) throw ConfigError("attack: sigma must be non-negative");
  }
};

struct AdversarialSample {
  std::vector<double> features;
  std::size_t target_label = 0;
  std::size_t source_index = 0;
  std::size_t replica_index = 1;  // 1..M

  friend bool operator==(const AdversarialSample&, const AdversarialSample&) = default;
};

struct TargetAssignment {
  std::size_t source_index;
  std::size_t target_label;
};

/// M independent wrong-label targets per forget sample, source-major order.
inline std::vector<TargetAssignment> assign_targets(const LabeledDataset& forget_set,
                                                    std::size_t per_sample_count,
                                                    std::size_t class_count, Rng& rng) {
  if (class_count < 2) throw LabelError("no wrong label exists with fewer than 2 classes");
  std::vector<TargetAssignment> out;
  out.reserve(forget_set.size() * per_sample_count);
  for (std::size_t i = 0; i < forget_set.size(); ++i) {
    const std::size_t y = forget_set[i].label;
    if (y >= class_count) throw LabelError("forget-set label out of range");
    for (std::size_t j = 0; j < per_sample_count; ++j)
      out.push_back({i, draw_wrong_label(y, class_count, rng)});
  }
  return out;
}

/// x + u with u elementwise uniform in the open interval (-tau, tau).
inline std::vector<double> init_perturbation(std::span<const double> x, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw ConfigError("perturbation radius must be positive");
  std::uniform_real_distribution<double> u(-tau, tau);
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) {
    double d = u(rng);
    while (d == -tau) d = u(rng);
    v += d;
  }
  return out;
}

namespace detail {

constexpr double sign(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline void clip_to_ball(std::span<double> x, std::span<const double> center, double tau) {
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = std::clamp(x[i], center[i] - tau, center[i] + tau);
}

}  // namespace detail

/// One signed-gradient step on the cross-entropy toward `target`.
inline std::vector<double> fgsm_step(const Classifier& model, std::span<const double> x,
                                     std::size_t target, double sigma,
                                     StepDirection direction = StepDirection::descend) {
  const GradientVector g = grad_input(model, x, target);
  detail::require_finite(g.values, "input gradient");
  const double s = direction == StepDirection::descend ? -sigma : sigma;
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * detail::sign(g.values[i]);
  return out;
}

/// Targeted PGD from a random start. The returned sample carries only the
/// features and target; the caller fills in source and replica indices.
inline AdversarialSample pgd_attack(const Classifier& model, std::span<const double> x,
                                    std::size_t target, const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  model.check_input(x);
  model.check_label(target);
  const double sigma = cfg.step_size();
  std::vector<double> cur = init_perturbation(x, cfg.tau, rng);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    cur = fgsm_step(model, cur, target, sigma, cfg.direction);
    if (cfg.clip == ClipMode::every_step) detail::clip_to_ball(cur, x, cfg.tau);
  }
  detail::clip_to_ball(cur, x, cfg.tau);
  return {std::move(cur), target, 0, 1};
}

/// Seed of the stream used for replica `replica` (1-based) of source `source`.
inline std::uint64_t replica_seed(std::uint64_t seed, std::size_t source, std::size_t replica) {
  return derive_seed(seed, {source, replica});
}

/// M adversarial samples per forget sample, source-major. Each replica uses
/// its own stream from (seed, source_index, replica_index): target first,
/// then the random start.
inline std::vector<AdversarialSample> generate_adversarial_set(const Classifier& model,
                                                               const LabeledDataset& forget_set,
                                                               const AttackConfig& cfg) {
  cfg.validate();
  if (forget_set.empty()) throw ConfigError("adversarial generation needs a nonempty forget set");
  const std::size_t c = model.class_count();
  if (c < 2) throw LabelError("no wrong label exists with fewer than 2 classes");
  std::vector<AdversarialSample> out;
  out.reserve(forget_set.size() * cfg.per_sample_count);
  for (std::size_t i = 0; i < forget_set.size(); ++i) {
    const Sample& src = forget_set[i];
    for (std::size_t j = 1; j <= cfg.per_sample_count; ++j) {
      Rng rng(replica_seed(cfg.seed, i, j));
      const std::size_t target = draw_wrong_label(src.label, c, rng);
      AdversarialSample adv = pgd_attack(model, src.features, target, cfg, rng);
      adv.source_index = i;
      adv.replica_index = j;
      out.push_back(std::move(adv));
    }
  }
  return out;
}

/// Adversarial set in dataset form: label = target, group = source index.
inline LabeledDataset adversarial_as_dataset(const std::vector<AdversarialSample>& adv,
                                             std::size_t feature_dim, std::size_t class_count) {
  LabeledDataset ds(feature_dim, class_count);
  for (const AdversarialSample& a : adv)
    ds.add({a.features, a.target_label, static_cast<std::int64_t>(a.source_index)});
  return ds;
}

}  // namespace fsu
