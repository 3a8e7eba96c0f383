#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dacnet/model.hpp"
#include "dacnet/tensor.hpp"

namespace dacnet {

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  double plateau_factor = 0.5;  // the literal 0.0005 reading stays selectable
  std::size_t plateau_patience = 2;
  double weight_decay = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t max_epochs = 30;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless 0 < plateau_factor < 1, patience >= 1, batch_size >= 1,
  /// learning_rate > 0, weight_decay >= 0, betas in [0, 1) and epsilon > 0.
  void validate() const;
};

inline constexpr double kMinLearningRate = 1e-8;

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam step over `params` at `learning_rate`, then decoupled
/// decay p -= learning_rate * weight_decay * p (decay uses the pre-step value).
/// Parameters without a gradient take a zero gradient. Every gradient is checked
/// before anything is modified; a non-finite value throws NumericError naming it.
void adam_step(std::span<const NamedParameter> params, AdamState& state, const TrainConfig& config,
               double learning_rate);

/// Learning rate after replaying the per-epoch training losses from
/// config.learning_rate: each epoch whose loss does not decrease versus the
/// previous one extends a plateau; a plateau of `plateau_patience` epochs
/// multiplies the rate by plateau_factor (floored at kMinLearningRate) and restarts.
double plateau_lr(std::span<const double> epoch_losses, const TrainConfig& config);

}  // namespace dacnet
