#include "dacnet/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "dacnet/errors.hpp"

namespace dacnet {

Tensor make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<Tensor> parts;
  parts.reserve(indices.size());
  for (std::size_t i : indices) parts.push_back(data.inputs.at(i));
  return stack(parts);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + epoch);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.empty()) throw DataError("cannot evaluate on an empty dataset");
  EvalResult result{0.0, ConfusionMatrix(model.config().num_classes)};
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const ForwardResult out = model.forward(make_batch(data, idx), Mode::eval);
    const auto pred = predict(out.logits->value);
    for (std::size_t k = 0; k < idx.size(); ++k) result.confusion.add(data.labels[idx[k]], pred[k]);
  }
  result.accuracy = result.confusion.accuracy();
  return result;
}

std::string format_epoch_log(const EpochLog& log) {
  char line[160];
  if (log.val_accuracy >= 0.0) {
    std::snprintf(line, sizeof(line), "epoch %zu loss %.6f val_ca %.4f lr %.3g", log.epoch, log.train_loss,
                  log.val_accuracy, log.learning_rate);
  } else {
    std::snprintf(line, sizeof(line), "epoch %zu loss %.6f val_ca - lr %.3g", log.epoch, log.train_loss,
                  log.learning_rate);
  }
  return line;
}

double train_step(Model& model, const Tensor& batch, std::span<const std::size_t> labels, AdamState& state,
                  const TrainConfig& config, double learning_rate) {
  Tape tape;
  model.zero_grad();
  const ForwardResult out = model.forward(batch, Mode::train, &tape);
  const Var loss = ops::softmax_cross_entropy(&tape, out.logits, {labels.begin(), labels.end()});
  const double value = loss->value.item();
  if (!std::isfinite(value)) {
    throw NumericError("non-finite training loss at step " + std::to_string(state.step + 1));
  }
  tape.backward(loss);
  adam_step(model.parameters(), state, config, learning_rate);
  return value;
}

TrainResult train(Model& model, const Dataset& training, const Dataset& validation, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  TrainResult result;
  if (config.max_epochs == 0) return result;
  if (training.empty()) throw DataError("training set is empty");

  AdamState state;
  std::vector<double> losses;
  double lr = config.learning_rate;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = epoch_order(training.size(), config.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(config.batch_size, order.size() - start));
      std::vector<std::size_t> labels;
      for (std::size_t i : idx) labels.push_back(training.labels[i]);
      loss_sum += train_step(model, make_batch(training, idx), labels, state, config, lr) *
                  static_cast<double>(idx.size());
      ++result.steps;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(training.size());
    log.learning_rate = lr;
    if (!validation.empty()) log.val_accuracy = evaluate(model, validation, config.batch_size).accuracy;
    result.epochs.push_back(log);
    losses.push_back(log.train_loss);
    lr = plateau_lr(losses, config);
    if (on_epoch) on_epoch(log, model);
  }
  return result;
}

}  // namespace dacnet
