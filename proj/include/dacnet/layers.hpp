#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dacnet/tensor.hpp"

namespace dacnet {

// ---- batch normalization ---------------------------------------------------

enum class Mode { train, eval };

struct RunningStats {
  Tensor mean;
  Tensor var;
  explicit RunningStats(std::size_t channels = 1)
      : mean(Shape{channels}, 0.0), var(Shape{channels}, 1.0) {}
};

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
};

struct BatchNormSaved {
  Tensor normalized;  // x_hat
  Tensor inv_std;     // [C]
};

/// Per-channel normalization of a [B, C, ...] tensor over batch and spatial axes.
/// Train mode uses the biased batch variance and folds the batch statistics into
/// `stats` (unbiased variance, exponential momentum). Eval mode reads `stats`.
Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         RunningStats& stats, Mode mode, const BatchNormOptions& options,
                         BatchNormSaved* saved = nullptr);

struct BatchNormGradients {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

BatchNormGradients batchnorm_backward(const Tensor& output_grad, const Tensor& gamma,
                                      const BatchNormSaved& saved, Mode mode);

// ---- elementwise / pooling / dense ----------------------------------------

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& output_grad, const Tensor& input);

/// [B, C, H, W] -> [B, C], mean over all spatial positions.
Tensor global_avg_pool_forward(const Tensor& input);
Tensor global_avg_pool_backward(const Tensor& output_grad, const Shape& input_shape);

/// [B, I] x weight [O, I] + bias [O] -> [B, O]. `bias` may be null.
Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor* bias);

struct LinearGradients {
  Tensor input;
  Tensor weight;
  Tensor bias;
};
LinearGradients linear_backward(const Tensor& output_grad, const Tensor& input,
                                const Tensor& weight);

// ---- classification loss --------------------------------------------------

struct SoftmaxCrossEntropy {
  double loss = 0.0;  // mean over the batch of -log p[label]
  Tensor probs;       // [B, C]
};

Tensor softmax(const Tensor& logits);

/// Max-subtracted softmax followed by mean cross-entropy. Labels must lie in [0, C).
SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

/// Gradient of the mean loss with respect to the logits: (probs - onehot) / B.
Tensor softmax_cross_entropy_backward(const Tensor& probs, std::span<const std::size_t> labels,
                                      double loss_grad = 1.0);

}  // namespace dacnet
