#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "fsu/data.hpp"
#include "fsu/error.hpp"
#include "fsu/model.hpp"
#include "fsu/rng.hpp"

namespace fsu {

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t shuffle_seed = 0;
};

/// Plain mini-batch Adam on mean cross-entropy. Returns the mean training
/// loss of the final epoch.
inline double train_classifier(Classifier& model, const LabeledDataset& data,
                               const TrainOptions& opt) {
  if (data.empty()) throw ConfigError("training on an empty dataset");
  if (opt.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::vector<ExampleRef> pool = data.examples();
  AdamState adam(model.parameter_count());
  GradientVector grad{std::vector<double>(model.parameter_count())};
  Rng rng(opt.shuffle_seed);
  double last_epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(pool.begin(), pool.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < pool.size(); start += opt.batch_size) {
      const std::size_t end = std::min(pool.size(), start + opt.batch_size);
      const double w = 1.0 / static_cast<double>(end - start);
      std::fill(grad.values.begin(), grad.values.end(), 0.0);
      for (std::size_t k = start; k < end; ++k)
        loss_sum += accumulate_param_gradient(model, pool[k], w, grad.values);
      optimizer_step(model, grad, adam, opt.lr);
    }
    last_epoch_loss = loss_sum / static_cast<double>(pool.size());
  }
  return last_epoch_loss;
}

}  // namespace fsu
