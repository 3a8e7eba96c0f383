#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dacnet/metrics.hpp"
#include "dacnet/model.hpp"
#include "dacnet/optimizer.hpp"

namespace dacnet {

// In-memory segments: each input is [C, F, T], all of one shape.
struct Dataset {
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }
};

/// Stacks the selected segments into [B, C, F, T].
Tensor make_batch(const Dataset& data, std::span<const std::size_t> indices);

/// Seeded Fisher-Yates permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion{1};
};

/// Eval-mode forward over `data` in batches; argmax predictions (lowest index on ties).
/// Throws DataError on an empty dataset.
EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size = 32);

struct EpochLog {
  std::size_t epoch = 0;        // 1-based
  double train_loss = 0.0;      // mean over segments
  double val_accuracy = -1.0;   // negative when no validation set
  double learning_rate = 0.0;   // rate used during this epoch
};

std::string format_epoch_log(const EpochLog& log);

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochLog&, Model&)>;

/// Mini-batch training with softmax cross-entropy, Adam and plateau decay.
/// The final partial batch is kept. `validation` may be empty. With
/// max_epochs == 0 nothing is changed.
TrainResult train(Model& model, const Dataset& training, const Dataset& validation, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Loss of one training step on a fixed batch, before the update is applied.
double train_step(Model& model, const Tensor& batch, std::span<const std::size_t> labels, AdamState& state,
                  const TrainConfig& config, double learning_rate);

}  // namespace dacnet
