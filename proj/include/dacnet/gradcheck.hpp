#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "dacnet/autograd.hpp"
#include "dacnet/tensor.hpp"

namespace dacnet {

/// Scalar function of several tensors. When `grads` is non-null the function
/// must also fill it with the analytic gradient of each input.
using ScalarFunction =
    std::function<double(const std::vector<Tensor>& inputs, std::vector<Tensor>* grads)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares analytic gradients with central differences of step `step` at every
/// input coordinate. Error per coordinate is
///   |analytic - central| / max(|analytic|, |central|, 1e-12).
/// Throws NumericError naming the coordinate when a value is not finite.
GradCheckResult finite_difference_check(const ScalarFunction& op, std::vector<Tensor> inputs,
                                        double step);

/// Adapts a tape-recorded computation into a ScalarFunction. `build` receives
/// one variable per input (all requiring gradients) and returns the scalar loss.
ScalarFunction tape_function(std::function<Var(Tape&, const std::vector<Var>&)> build);

}  // namespace dacnet
