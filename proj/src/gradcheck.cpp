#include "dacnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dacnet/errors.hpp"

namespace dacnet {

namespace {
void require_finite(double v, const char* what, std::size_t input, std::size_t element) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("non-finite ") + what + " at input " + std::to_string(input) +
                       ", element " + std::to_string(element));
  }
}
}  // namespace

GradCheckResult finite_difference_check(const ScalarFunction& op, std::vector<Tensor> inputs,
                                        double step) {
  if (!(step > 0.0)) throw ConfigError("finite difference step must be > 0");
  std::vector<Tensor> analytic;
  const double base = op(inputs, &analytic);
  require_finite(base, "loss", 0, 0);
  if (analytic.size() != inputs.size()) {
    throw ShapeError("op returned " + std::to_string(analytic.size()) + " gradients for " +
                     std::to_string(inputs.size()) + " inputs");
  }

  GradCheckResult result;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (!analytic[t].same_shape(inputs[t])) {
      throw ShapeError("gradient " + std::to_string(t) + " has shape " +
                       shape_string(analytic[t].shape()) + ", input has " +
                       shape_string(inputs[t].shape()));
    }
    for (std::size_t i = 0; i < inputs[t].size(); ++i) {
      const double original = inputs[t][i];
      inputs[t][i] = original + step;
      const double plus = op(inputs, nullptr);
      inputs[t][i] = original - step;
      const double minus = op(inputs, nullptr);
      inputs[t][i] = original;
      require_finite(plus, "perturbed loss", t, i);
      require_finite(minus, "perturbed loss", t, i);
      const double a = analytic[t][i];
      require_finite(a, "analytic gradient", t, i);
      const double c = (plus - minus) / (2.0 * step);
      const double err = std::abs(a - c) / std::max({std::abs(a), std::abs(c), 1e-12});
      ++result.coordinates;
      if (err > result.max_relative_error || result.coordinates == 1) {
        result.max_relative_error = err;
        result.worst_input = t;
        result.worst_element = i;
        result.analytic = a;
        result.numeric = c;
      }
    }
  }
  return result;
}

ScalarFunction tape_function(std::function<Var(Tape&, const std::vector<Var>&)> build) {
  return [build = std::move(build)](const std::vector<Tensor>& inputs, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Tensor& t : inputs) vars.push_back(make_var(t, true));
    Var loss = build(tape, vars);
    const double value = loss->value.item();
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (const Var& v : vars) grads->push_back(v->has_grad ? v->grad : Tensor(v->value.shape()));
    }
    return value;
  };
}

}  // namespace dacnet
