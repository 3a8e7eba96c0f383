#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dacnet/conv.hpp"
#include "dacnet/layers.hpp"
#include "dacnet/tensor.hpp"

namespace dacnet {

/// A tensor that takes part in differentiation. `grad` is only meaningful while
/// `has_grad` is set; a backward pass sets it for every variable that requires
/// gradients and was reached from the loss.
struct Variable {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool has_grad = false;

  void accumulate_grad(const Tensor& g);
  void clear_grad() { has_grad = false; }
};

using Var = std::shared_ptr<Variable>;

Var make_var(Tensor value, bool requires_grad = false);

/// Ordered record of the operations executed in a forward pass. Each entry is
/// the adjoint of one operation; backward() replays them newest first.
class Tape {
 public:
  void record(std::function<void()> adjoint) { entries_.push_back(std::move(adjoint)); }

  /// Seeds the loss gradient with ones and runs the recorded adjoints in reverse.
  void backward(const Var& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::vector<std::function<void()>> entries_;
};

// Differentiable operations. A null tape, or inputs that do not require
// gradients, run the forward computation only.
namespace ops {

Var conv2d(Tape* tape, const Var& input, const Var& kernel, const Var& bias, const ConvSpec& spec);

Var batchnorm(Tape* tape, const Var& input, const Var& gamma, const Var& beta, RunningStats& stats,
              Mode mode, const BatchNormOptions& options);

Var relu(Tape* tape, const Var& input);

Var add(Tape* tape, const Var& a, const Var& b);

Var global_avg_pool(Tape* tape, const Var& input);

Var linear(Tape* tape, const Var& input, const Var& weight, const Var& bias);

/// Concatenates [B, C_i] tensors along the feature axis, in order.
Var concat(Tape* tape, std::span<const Var> parts);

/// Mean softmax cross-entropy; the scalar loss variable. Probabilities are
/// written to `probs` when given.
Var softmax_cross_entropy(Tape* tape, const Var& logits, std::vector<std::size_t> labels,
                          Tensor* probs = nullptr);

/// Scalar sum(weights * input); a convenient probe loss for gradient checks.
Var weighted_sum(Tape* tape, const Var& input, const Tensor& weights);

}  // namespace ops

}  // namespace dacnet
