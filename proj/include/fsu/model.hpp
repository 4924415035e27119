#pragma once

// Feed-forward softmax classifier with exact backpropagation to both the
// parameters and the input, plus cross-entropy and an Adam optimizer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fsu/error.hpp"
#include "fsu/rng.hpp"

namespace fsu {

/// Probability floor applied before taking the log in cross-entropy.
inline constexpr double kProbabilityFloor = 1e-12;

/// Flat parameter values, ordered as Classifier::parameters().
struct ParameterSnapshot {
  std::vector<double> values;
};

/// Gradient aligned either to the parameter enumeration or to the input.
struct GradientVector {
  std::vector<double> values;
};

/// One (features, label) pair viewed without copying.
struct ExampleRef {
  std::span<const double> features;
  std::size_t label;
};

/// Multilayer perceptron: tanh on every hidden layer, raw logits out.
///
/// All parameters live in one flat vector. Layer k contributes its weight
/// matrix (row-major, `out` rows by `in` columns) followed by its bias
/// vector, and layers appear in forward order. FisherDiagonal,
/// ParameterSnapshot and parameter gradients all use this enumeration.
class Classifier {
 public:
  struct Layer {
    std::size_t in;
    std::size_t out;
    std::size_t offset;  // first weight in the flat vector; bias follows at offset + in*out

    std::size_t bias_offset() const noexcept { return offset + in * out; }
    std::size_t size() const noexcept { return in * out + out; }

    friend bool operator==(const Layer&, const Layer&) = default;
  };

  /// All parameters zero. `hidden` may be empty (single dense layer).
  Classifier(std::size_t input_dim, std::vector<std::size_t> hidden,
             std::size_t class_count = 7)
      : input_dim_(input_dim), class_count_(class_count), hidden_(std::move(hidden)) {
    if (input_dim == 0 || class_count == 0)
      throw ShapeError("classifier needs positive input_dim and class_count");
    std::size_t in = input_dim;
    std::size_t offset = 0;
    auto push = [&](std::size_t out) {
      if (out == 0) throw ShapeError("layer width must be positive");
      layers_.push_back({in, out, offset});
      offset += in * out + out;
      in = out;
    };
    for (std::size_t w : hidden_) push(w);
    push(class_count);
    params_.assign(offset, 0.0);
  }

  /// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
  static Classifier initialized(std::size_t input_dim, std::vector<std::size_t> hidden,
                                std::size_t class_count, std::uint64_t seed) {
    Classifier model(input_dim, std::move(hidden), class_count);
    Rng rng(seed);
    for (const Layer& l : model.layers_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (std::size_t k = 0; k < l.in * l.out; ++k) model.params_[l.offset + k] = u(rng);
    }
    return model;
  }

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t class_count() const noexcept { return class_count_; }
  const std::vector<std::size_t>& hidden_widths() const noexcept { return hidden_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  std::span<const double> parameter_view() const noexcept { return params_; }
  std::span<double> parameter_view() noexcept { return params_; }

  ParameterSnapshot parameters() const { return {params_}; }

  void set_parameters(std::span<const double> values) {
    if (values.size() != params_.size())
      throw ShapeError("parameter vector has " + std::to_string(values.size()) +
                       " entries, model has " + std::to_string(params_.size()));
    std::copy(values.begin(), values.end(), params_.begin());
  }

  double& weight(std::size_t layer, std::size_t row, std::size_t col) {
    const Layer& l = layers_.at(layer);
    return params_[l.offset + row * l.in + col];
  }
  double& bias(std::size_t layer, std::size_t row) {
    return params_[layers_.at(layer).bias_offset() + row];
  }

  void check_input(std::span<const double> x) const {
    if (x.size() != input_dim_)
      throw ShapeError("input has " + std::to_string(x.size()) + " features, model expects " +
                       std::to_string(input_dim_));
  }

  void check_label(std::size_t label) const {
    if (label >= class_count_)
      throw LabelError("label " + std::to_string(label) + " out of range for " +
                       std::to_string(class_count_) + " classes");
  }

  /// Activations of every layer: acts[0] is the input, acts.back() the logits.
  std::vector<std::vector<double>> activations(std::span<const double> x) const {
    std::vector<std::vector<double>> acts;
    activations_into(x, acts);
    return acts;
  }

  /// As activations(), reusing the buffers in `acts`.
  void activations_into(std::span<const double> x, std::vector<std::vector<double>>& acts) const {
    check_input(x);
    acts.resize(layers_.size() + 1);
    acts[0].assign(x.begin(), x.end());
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const Layer& l = layers_[k];
      const std::vector<double>& a = acts[k];
      std::vector<double>& z = acts[k + 1];
      z.resize(l.out);
      const double* w = params_.data() + l.offset;
      const double* b = params_.data() + l.bias_offset();
      const bool hidden = k + 1 < layers_.size();
      for (std::size_t o = 0; o < l.out; ++o) {
        double s = b[o];
        const double* row = w + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) s += row[i] * a[i];
        z[o] = hidden ? std::tanh(s) : s;
      }
    }
  }

  std::vector<double> logits(std::span<const double> x) const {
    return std::move(activations(x).back());
  }

  friend bool operator==(const Classifier&, const Classifier&) = default;

 private:
  std::size_t input_dim_;
  std::size_t class_count_;
  std::vector<std::size_t> hidden_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

/// Numerically stable softmax (max-shifted).
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double m = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

inline std::vector<double> forward(const Classifier& model, std::span<const double> x) {
  return softmax(model.logits(x));
}

/// -log(max(probs[label], 1e-12)).
inline double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size())
    throw LabelError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  return -std::log(std::max(probs[label], kProbabilityFloor));
}

namespace detail {

// Backpropagates the cross-entropy of one sample. Adds `scale` times the
// parameter gradient into `param_grad` (skipped when empty) and writes the
// input gradient into `input_grad` (skipped when empty). Returns the loss.
inline double backprop(const Classifier& model, std::span<const double> x, std::size_t label,
                       double scale, std::span<double> param_grad,
                       std::span<double> input_grad) {
  model.check_label(label);
  thread_local std::vector<std::vector<double>> acts;
  thread_local std::vector<double> delta;
  thread_local std::vector<double> back;
  model.activations_into(x, acts);
  const auto& layers = model.layers();
  const auto params = model.parameter_view();

  // dCE/dlogits = softmax - onehot
  const std::vector<double>& z = acts.back();
  const double zmax = *std::max_element(z.begin(), z.end());
  delta.resize(z.size());
  double sum = 0.0;
  for (std::size_t o = 0; o < z.size(); ++o) sum += (delta[o] = std::exp(z[o] - zmax));
  for (double& d : delta) d /= sum;
  const double loss = -std::log(std::max(delta[label], kProbabilityFloor));
  delta[label] -= 1.0;

  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& l = layers[k];
    const std::vector<double>& a = acts[k];
    const double* w = params.data() + l.offset;
    if (!param_grad.empty()) {
      double* gw = param_grad.data() + l.offset;
      double* gb = param_grad.data() + l.bias_offset();
      for (std::size_t o = 0; o < l.out; ++o) {
        const double d = scale * delta[o];
        if (d == 0.0) continue;
        double* row = gw + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) row[i] += d * a[i];
        gb[o] += d;
      }
    }
    if (k == 0 && input_grad.empty()) break;
    back.assign(l.in, 0.0);
    for (std::size_t o = 0; o < l.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = w + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) back[i] += row[i] * d;
    }
    if (k == 0) {
      std::copy(back.begin(), back.end(), input_grad.begin());
      break;
    }
    for (std::size_t i = 0; i < l.in; ++i) back[i] *= 1.0 - a[i] * a[i];  // tanh'
    delta.swap(back);
  }
  return loss;
}

inline void require_finite(std::span<const double> v, const char* what) {
  for (double d : v)
    if (!std::isfinite(d)) throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace detail

/// Adds weight * d(CE)/d(theta) of one sample into `accumulator`; returns the loss.
inline double accumulate_param_gradient(const Classifier& model, const ExampleRef& ex,
                                        double weight, std::span<double> accumulator) {
  if (accumulator.size() != model.parameter_count())
    throw ShapeError("gradient accumulator not aligned to parameters");
  return detail::backprop(model, ex.features, ex.label, weight, accumulator, {});
}

/// Gradient of the mean cross-entropy over `batch` w.r.t. the flat parameters.
inline GradientVector grad_params(const Classifier& model, std::span<const ExampleRef> batch) {
  if (batch.empty()) throw ShapeError("grad_params on an empty batch");
  GradientVector g{std::vector<double>(model.parameter_count(), 0.0)};
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const ExampleRef& ex : batch) detail::backprop(model, ex.features, ex.label, w, g.values, {});
  return g;
}

/// Gradient of cross_entropy(forward(model, x), label) w.r.t. x.
inline GradientVector grad_input(const Classifier& model, std::span<const double> x,
                                 std::size_t label) {
  GradientVector g{std::vector<double>(model.input_dim(), 0.0)};
  detail::backprop(model, x, label, 0.0, {}, g.values);
  return g;
}

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates and step counter.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update, in place.
inline void optimizer_step(Classifier& model, const GradientVector& grad, AdamState& state,
                           double lr, const AdamOptions& opt = {}) {
  const std::size_t n = model.parameter_count();
  if (grad.values.size() != n) throw ShapeError("gradient not aligned to parameters");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (state.m.empty() && state.step == 0) state = AdamState(n);
  if (state.m.size() != n) throw ShapeError("optimizer state not aligned to parameters");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  auto params = model.parameter_view();
  for (std::size_t k = 0; k < n; ++k) {
    const double g = grad.values[k];
    state.m[k] = opt.beta1 * state.m[k] + (1.0 - opt.beta1) * g;
    state.v[k] = opt.beta2 * state.v[k] + (1.0 - opt.beta2) * g * g;
    params[k] -= lr * (state.m[k] / c1) / (std::sqrt(state.v[k] / c2) + opt.epsilon);
  }
}

/// Index of the largest probability; ties go to the lowest index.
inline std::size_t predict(const Classifier& model, std::span<const double> x) {
  const auto p = forward(model, x);
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace fsu
