#pragma once

// Test-only oracles. Nothing here calls the backprop path under test.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fsu/fsu.hpp"

namespace fsu::testing {

inline Classifier random_model(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes,
                               std::uint64_t seed, double bias_scale = 0.3) {
  Classifier m = Classifier::initialized(in, std::move(hidden), classes, seed);
  Rng rng(seed ^ 0xabcdefULL);
  std::uniform_real_distribution<double> u(-bias_scale, bias_scale);
  for (const auto& l : m.layers())
    for (std::size_t o = 0; o < l.out; ++o) m.parameter_view()[l.bias_offset() + o] = u(rng);
  return m;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n01(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = n01(rng);
  return v;
}

/// Forward pass recomputed scalar by scalar with reversed summation order and
/// log-sum-exp normalisation.
inline std::vector<double> oracle_forward(const Classifier& m, const std::vector<double>& x) {
  std::vector<double> a = x;
  const auto p = m.parameter_view();
  const auto& layers = m.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    std::vector<double> z(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
      double s = 0.0;
      for (std::size_t i = l.in; i-- > 0;) s += p[l.offset + o * l.in + i] * a[i];
      s += p[l.bias_offset() + o];
      z[o] = k + 1 < layers.size() ? std::tanh(s) : s;
    }
    a = z;
  }
  double m_ = a[0];
  for (double v : a) m_ = std::max(m_, v);
  double lse = 0.0;
  for (double v : a) lse += std::exp(v - m_);
  lse = m_ + std::log(lse);
  for (double& v : a) v = std::exp(v - lse);
  return a;
}

inline double oracle_loss(const Classifier& m, const std::vector<double>& x, std::size_t label) {
  return -std::log(oracle_forward(m, x)[label]);
}

/// Central finite differences of f at x, step h.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Worst relative error over coordinates whose analytic magnitude exceeds `floor`.
inline double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (std::abs(analytic[i]) <= floor) continue;
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / std::abs(analytic[i]));
  }
  return worst;
}

/// Finite-difference parameter gradient of the mean loss over a batch.
inline std::vector<double> fd_param_gradient(const Classifier& model,
                                             const std::vector<std::pair<std::vector<double>, std::size_t>>& batch) {
  Classifier probe = model;
  auto f = [&](const std::vector<double>& theta) {
    probe.set_parameters(theta);
    double s = 0.0;
    for (const auto& [x, y] : batch) s += oracle_loss(probe, x, y);
    return s / static_cast<double>(batch.size());
  };
  const auto theta = model.parameters().values;
  return central_difference(f, theta);
}

inline std::vector<double> fd_input_gradient(const Classifier& model, const std::vector<double>& x,
                                             std::size_t label) {
  return central_difference([&](const std::vector<double>& v) { return oracle_loss(model, v, label); }, x);
}

}  // namespace fsu::testing
