#include "dacnet/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "dacnet/errors.hpp"

namespace dacnet {

void TrainConfig::validate() const {
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("plateau_factor must be in (0, 1)");
  if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
}

void adam_step(std::span<const NamedParameter> params, AdamState& state, const TrainConfig& config,
               double learning_rate) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.var->value.shape(), 0.0);
      state.second_moment.emplace_back(p.var->value.shape(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ConfigError("optimizer state does not match the parameter list");
  }
  for (const auto& p : params) {
    if (!p.var->has_grad) continue;
    const auto g = p.var->grad.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError("non-finite gradient " + std::to_string(g[i]) + " in parameter '" + p.name +
                           "' at flat index " + std::to_string(i) + " (step " +
                           std::to_string(state.step + 1) + ")");
      }
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Variable& var = *params[k].var;
    auto w = var.value.values();
    auto m = state.first_moment[k].values();
    auto v = state.second_moment[k].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = var.has_grad ? var.grad.values()[i] : 0.0;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config.epsilon);
      w[i] -= learning_rate * (update + config.weight_decay * w[i]);
    }
  }
}

double plateau_lr(std::span<const double> epoch_losses, const TrainConfig& config) {
  double lr = config.learning_rate;
  std::size_t stalled = 0;
  for (std::size_t i = 1; i < epoch_losses.size(); ++i) {
    stalled = epoch_losses[i] < epoch_losses[i - 1] ? 0 : stalled + 1;
    if (stalled >= config.plateau_patience) {
      lr = std::max(lr * config.plateau_factor, kMinLearningRate);
      stalled = 0;
    }
  }
  return lr;
}

}  // namespace dacnet
