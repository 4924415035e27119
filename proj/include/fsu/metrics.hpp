#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fsu/data.hpp"
#include "fsu/error.hpp"
#include "fsu/model.hpp"

namespace fsu {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t class_count)
      : class_count_(class_count), counts_(class_count * class_count, 0) {}

  ConfusionMatrix(std::size_t class_count, std::vector<std::size_t> row_major)
      : class_count_(class_count), counts_(std::move(row_major)) {
    if (counts_.size() != class_count * class_count)
      throw ShapeError("confusion matrix needs C*C counts");
  }

  void record(std::size_t truth, std::size_t predicted) {
    if (truth >= class_count_ || predicted >= class_count_)
      throw LabelError("confusion entry out of range");
    ++counts_[truth * class_count_ + predicted];
  }

  std::size_t class_count() const noexcept { return class_count_; }
  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts_.at(truth * class_count_ + predicted);
  }
  std::size_t row_sum(std::size_t truth) const {
    std::size_t s = 0;
    for (std::size_t p = 0; p < class_count_; ++p) s += at(truth, p);
    return s;
  }
  std::size_t total() const {
    std::size_t s = 0;
    for (std::size_t c : counts_) s += c;
    return s;
  }
  const std::vector<std::size_t>& counts() const noexcept { return counts_; }

  /// Recall per class; NaN for classes with no true samples.
  std::vector<double> recalls() const {
    std::vector<double> r(class_count_);
    for (std::size_t c = 0; c < class_count_; ++c) {
      const std::size_t n = row_sum(c);
      r[c] = n ? static_cast<double>(at(c, c)) / static_cast<double>(n) : std::nan("");
    }
    return r;
  }

 private:
  std::size_t class_count_;
  std::vector<std::size_t> counts_;
};

/// Unweighted average recall over the classes that have true samples.
inline double uar(const ConfusionMatrix& cm) {
  double sum = 0.0;
  std::size_t populated = 0;
  for (double r : cm.recalls()) {
    if (std::isnan(r)) continue;
    sum += r;
    ++populated;
  }
  if (populated == 0) throw EmptyEvalError("UAR of an empty confusion matrix");
  return sum / static_cast<double>(populated);
}

struct EvalReport {
  std::string split_name;
  double uar = 0.0;
  ConfusionMatrix confusion{0};
  std::vector<double> per_class_recall;  // NaN where a class is absent
  std::size_t n_samples = 0;
};

inline EvalReport evaluate(const Classifier& model, const LabeledDataset& ds,
                           std::string split_name = {}) {
  if (ds.empty()) throw EmptyEvalError("evaluate on an empty dataset" +
                                       (split_name.empty() ? "" : " (" + split_name + ")"));
  if (ds.feature_dim() != model.input_dim() || ds.class_count() != model.class_count())
    throw ShapeError("dataset shape does not match the model");
  ConfusionMatrix cm(model.class_count());
  for (const Sample& s : ds.samples()) cm.record(s.label, predict(model, s.features));
  EvalReport rep;
  rep.split_name = std::move(split_name);
  rep.uar = uar(cm);
  rep.per_class_recall = cm.recalls();
  rep.n_samples = ds.size();
  rep.confusion = std::move(cm);
  return rep;
}

/// Upper tail of the standard normal, P(Z >= z).
inline double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

struct ZTestResult {
  double z = 0.0;
  double p_value = 0.5;
  bool degenerate = false;  // pooled variance was zero
};

/// Pooled two-proportion z-test of "a > b", treating each UAR as a success
/// proportion over its sample count.
inline ZTestResult one_tailed_z_test(double uar_a, double uar_b, std::size_t n_a, std::size_t n_b) {
  if (n_a == 0 || n_b == 0) throw ConfigError("z-test needs positive sample counts");
  if (!(uar_a >= 0.0 && uar_a <= 1.0 && uar_b >= 0.0 && uar_b <= 1.0))
    throw ConfigError("z-test proportions must lie in [0, 1]");
  const double na = static_cast<double>(n_a);
  const double nb = static_cast<double>(n_b);
  const double pooled = (uar_a * na + uar_b * nb) / (na + nb);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb));
  if (se == 0.0) return {0.0, 0.5, true};
  const double z = (uar_a - uar_b) / se;
  return {z, normal_upper_tail(z), false};
}

}  // namespace fsu
