#include "dacnet/autograd.hpp"

#include <algorithm>

#include "dacnet/errors.hpp"

namespace dacnet {

void Variable::accumulate_grad(const Tensor& g) {
  if (!has_grad) {
    grad = g;
    has_grad = true;
  } else {
    grad += g;
  }
}

Var make_var(Tensor value, bool requires_grad) {
  auto v = std::make_shared<Variable>();
  v->value = std::move(value);
  v->requires_grad = requires_grad;
  return v;
}

void Tape::backward(const Var& loss) {
  loss->grad = Tensor(loss->value.shape(), 1.0);
  loss->has_grad = true;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

namespace ops {

namespace {

bool needs_grad(const Var& v) { return v && v->requires_grad; }

template <typename... Vs>
bool any_needs_grad(const Vs&... vs) {
  return (needs_grad(vs) || ...);
}

Var output(Tape* tape, Tensor value, bool inputs_need_grad) {
  return make_var(std::move(value), tape != nullptr && inputs_need_grad);
}

}  // namespace

Var conv2d(Tape* tape, const Var& input, const Var& kernel, const Var& bias, const ConvSpec& spec) {
  Var out = output(tape,
                   conv2d_forward(input->value, kernel->value, bias ? &bias->value : nullptr, spec),
                   any_needs_grad(input, kernel, bias));
  if (out->requires_grad) {
    tape->record([input, kernel, bias, out, spec] {
      if (!out->has_grad) return;
      ConvGradients g = conv2d_backward(out->grad, input->value, kernel->value, spec);
      if (needs_grad(input)) input->accumulate_grad(g.input);
      if (needs_grad(kernel)) kernel->accumulate_grad(g.kernel);
      if (needs_grad(bias) && g.bias) bias->accumulate_grad(*g.bias);
    });
  }
  return out;
}

Var batchnorm(Tape* tape, const Var& input, const Var& gamma, const Var& beta, RunningStats& stats,
              Mode mode, const BatchNormOptions& options) {
  const bool grad = tape != nullptr && any_needs_grad(input, gamma, beta);
  auto saved = std::make_shared<BatchNormSaved>();
  Var out = output(tape,
                   batchnorm_forward(input->value, gamma->value, beta->value, stats, mode, options,
                                     grad ? saved.get() : nullptr),
                   grad);
  if (out->requires_grad) {
    tape->record([input, gamma, beta, out, saved, mode] {
      if (!out->has_grad) return;
      BatchNormGradients g = batchnorm_backward(out->grad, gamma->value, *saved, mode);
      if (needs_grad(input)) input->accumulate_grad(g.input);
      if (needs_grad(gamma)) gamma->accumulate_grad(g.gamma);
      if (needs_grad(beta)) beta->accumulate_grad(g.beta);
    });
  }
  return out;
}

Var relu(Tape* tape, const Var& input) {
  Var out = output(tape, relu_forward(input->value), needs_grad(input));
  if (out->requires_grad) {
    tape->record([input, out] {
      if (!out->has_grad) return;
      input->accumulate_grad(relu_backward(out->grad, input->value));
    });
  }
  return out;
}

Var add(Tape* tape, const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) {
    throw ShapeError("add: shapes " + shape_string(a->value.shape()) + " and " +
                     shape_string(b->value.shape()) + " differ");
  }
  Var out = output(tape, a->value + b->value, any_needs_grad(a, b));
  if (out->requires_grad) {
    tape->record([a, b, out] {
      if (!out->has_grad) return;
      if (needs_grad(a)) a->accumulate_grad(out->grad);
      if (needs_grad(b)) b->accumulate_grad(out->grad);
    });
  }
  return out;
}

Var global_avg_pool(Tape* tape, const Var& input) {
  Var out = output(tape, global_avg_pool_forward(input->value), needs_grad(input));
  if (out->requires_grad) {
    tape->record([input, out] {
      if (!out->has_grad) return;
      input->accumulate_grad(global_avg_pool_backward(out->grad, input->value.shape()));
    });
  }
  return out;
}

Var linear(Tape* tape, const Var& input, const Var& weight, const Var& bias) {
  Var out = output(tape, linear_forward(input->value, weight->value, bias ? &bias->value : nullptr),
                   any_needs_grad(input, weight, bias));
  if (out->requires_grad) {
    tape->record([input, weight, bias, out] {
      if (!out->has_grad) return;
      LinearGradients g = linear_backward(out->grad, input->value, weight->value);
      if (needs_grad(input)) input->accumulate_grad(g.input);
      if (needs_grad(weight)) weight->accumulate_grad(g.weight);
      if (needs_grad(bias)) bias->accumulate_grad(g.bias);
    });
  }
  return out;
}

Var concat(Tape* tape, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const std::size_t batch = parts.front()->value.dim(0);
  std::size_t width = 0;
  bool grad = false;
  for (const Var& p : parts) {
    if (p->value.rank() != 2 || p->value.dim(0) != batch) {
      throw ShapeError("concat parts must be [B, C] with a common batch, got " +
                       shape_string(p->value.shape()));
    }
    width += p->value.dim(1);
    grad = grad || needs_grad(p);
  }
  Tensor joined(Shape{batch, width});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t w = p->value.dim(1);
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(p->value.data() + b * w, w, joined.data() + b * width + offset);
    }
    offset += w;
  }
  Var out = output(tape, std::move(joined), grad);
  if (out->requires_grad) {
    std::vector<Var> kept(parts.begin(), parts.end());
    tape->record([kept, out, batch, width] {
      if (!out->has_grad) return;
      std::size_t off = 0;
      for (const Var& p : kept) {
        const std::size_t w = p->value.dim(1);
        if (needs_grad(p)) {
          Tensor g(p->value.shape());
          for (std::size_t b = 0; b < batch; ++b) {
            std::copy_n(out->grad.data() + b * width + off, w, g.data() + b * w);
          }
          p->accumulate_grad(g);
        }
        off += w;
      }
    });
  }
  return out;
}

Var softmax_cross_entropy(Tape* tape, const Var& logits, std::vector<std::size_t> labels,
                          Tensor* probs) {
  SoftmaxCrossEntropy r = dacnet::softmax_cross_entropy(logits->value, labels);
  if (probs) *probs = r.probs;
  Var out = output(tape, Tensor::scalar(r.loss), needs_grad(logits));
  if (out->requires_grad) {
    auto saved_probs = std::make_shared<Tensor>(std::move(r.probs));
    tape->record([logits, out, saved_probs, labels = std::move(labels)] {
      if (!out->has_grad) return;
      logits->accumulate_grad(softmax_cross_entropy_backward(*saved_probs, labels, out->grad.item()));
    });
  }
  return out;
}

Var weighted_sum(Tape* tape, const Var& input, const Tensor& weights) {
  if (!input->value.same_shape(weights)) throw ShapeError("weighted_sum: weight shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * input->value[i];
  Var out = output(tape, Tensor::scalar(acc), needs_grad(input));
  if (out->requires_grad) {
    tape->record([input, out, weights] {
      if (!out->has_grad) return;
      input->accumulate_grad(weights * out->grad.item());
    });
  }
  return out;
}

}  // namespace ops

}  // namespace dacnet
