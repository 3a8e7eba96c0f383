#include "dacnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "dacnet/errors.hpp"
#include "dacnet/mac_counter.hpp"
#include "dacnet/parallel.hpp"

namespace dacnet {

namespace {

struct ChannelLayout {
  std::size_t batch = 0, channels = 0, inner = 0;
  std::size_t count() const { return batch * inner; }
};

ChannelLayout channel_layout(const Tensor& t) {
  if (t.rank() < 2) throw ShapeError("batchnorm input must be [B, C, ...], got " + shape_string(t.shape()));
  ChannelLayout l{t.dim(0), t.dim(1), t.size() / (t.dim(0) * t.dim(1))};
  return l;
}

}  // namespace

Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         RunningStats& stats, Mode mode, const BatchNormOptions& options,
                         BatchNormSaved* saved) {
  const ChannelLayout l = channel_layout(input);
  if (gamma.size() != l.channels || beta.size() != l.channels) {
    throw ShapeError("batchnorm gamma/beta length (" + std::to_string(gamma.size()) + "/" +
                     std::to_string(beta.size()) + ") must equal channel count " +
                     std::to_string(l.channels));
  }
  if (stats.mean.size() != l.channels || stats.var.size() != l.channels) {
    throw ShapeError("batchnorm running stats do not match channel count " + std::to_string(l.channels));
  }
  if (l.count() == 0) throw ShapeError("batchnorm over zero batch x spatial extent");

  Tensor out(input.shape());
  Tensor normalized(input.shape());
  Tensor inv_std(Shape{l.channels});
  const double n = static_cast<double>(l.count());

  parallel_for(l.channels, [&](std::size_t c) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::train) {
      for (std::size_t b = 0; b < l.batch; ++b) {
        const double* x = input.data() + (b * l.channels + c) * l.inner;
        for (std::size_t i = 0; i < l.inner; ++i) mean += x[i];
      }
      mean /= n;
      for (std::size_t b = 0; b < l.batch; ++b) {
        const double* x = input.data() + (b * l.channels + c) * l.inner;
        for (std::size_t i = 0; i < l.inner; ++i) {
          const double dv = x[i] - mean;
          var += dv * dv;
        }
      }
      var /= n;
      const double unbiased = l.count() > 1 ? var * n / (n - 1.0) : var;
      stats.mean[c] = (1.0 - options.momentum) * stats.mean[c] + options.momentum * mean;
      stats.var[c] = (1.0 - options.momentum) * stats.var[c] + options.momentum * unbiased;
    } else {
      mean = stats.mean[c];
      var = stats.var[c];
    }
    const double is = 1.0 / std::sqrt(var + options.epsilon);
    inv_std[c] = is;
    const double g = gamma[c], bt = beta[c];
    for (std::size_t b = 0; b < l.batch; ++b) {
      const std::size_t off = (b * l.channels + c) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) {
        const double xh = (input[off + i] - mean) * is;
        normalized[off + i] = xh;
        out[off + i] = g * xh + bt;
      }
    }
  });
  if (saved) {
    saved->normalized = std::move(normalized);
    saved->inv_std = std::move(inv_std);
  }
  return out;
}

BatchNormGradients batchnorm_backward(const Tensor& output_grad, const Tensor& gamma,
                                      const BatchNormSaved& saved, Mode mode) {
  if (!output_grad.same_shape(saved.normalized)) {
    throw ShapeError("batchnorm output_grad shape " + shape_string(output_grad.shape()) +
                     " does not match forward shape " + shape_string(saved.normalized.shape()));
  }
  const ChannelLayout l = channel_layout(output_grad);
  BatchNormGradients g{Tensor(output_grad.shape()), Tensor(Shape{l.channels}),
                       Tensor(Shape{l.channels})};
  const double n = static_cast<double>(l.count());

  parallel_for(l.channels, [&](std::size_t c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < l.batch; ++b) {
      const std::size_t off = (b * l.channels + c) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) {
        sum_dy += output_grad[off + i];
        sum_dy_xhat += output_grad[off + i] * saved.normalized[off + i];
      }
    }
    g.gamma[c] = sum_dy_xhat;
    g.beta[c] = sum_dy;
    const double scale = gamma[c] * saved.inv_std[c];
    for (std::size_t b = 0; b < l.batch; ++b) {
      const std::size_t off = (b * l.channels + c) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) {
        if (mode == Mode::eval) {
          g.input[off + i] = scale * output_grad[off + i];
        } else {
          g.input[off + i] = scale * (output_grad[off + i] - sum_dy / n -
                                      saved.normalized[off + i] * sum_dy_xhat / n);
        }
      }
    }
  });
  return g;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& output_grad, const Tensor& input) {
  if (!output_grad.same_shape(input)) throw ShapeError("relu_backward shape mismatch");
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0 ? output_grad[i] : 0.0;
  return g;
}

Tensor global_avg_pool_forward(const Tensor& input) {
  if (input.rank() != 4) throw ShapeError("global_avg_pool expects [B,C,H,W], got " + shape_string(input.shape()));
  const std::size_t planes = input.dim(0) * input.dim(1), area = input.dim(2) * input.dim(3);
  Tensor out(Shape{input.dim(0), input.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    const double* x = input.data() + p * area;
    for (std::size_t i = 0; i < area; ++i) acc += x[i];
    out[p] = acc / static_cast<double>(area);
  }
  return out;
}

Tensor global_avg_pool_backward(const Tensor& output_grad, const Shape& input_shape) {
  if (input_shape.size() != 4 || output_grad.shape() != Shape{input_shape[0], input_shape[1]}) {
    throw ShapeError("global_avg_pool_backward shape mismatch");
  }
  Tensor g(input_shape);
  const std::size_t planes = input_shape[0] * input_shape[1], area = input_shape[2] * input_shape[3];
  for (std::size_t p = 0; p < planes; ++p) {
    const double v = output_grad[p] / static_cast<double>(area);
    std::fill_n(g.data() + p * area, area, v);
  }
  return g;
}

Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor* bias) {
  if (input.rank() != 2 || weight.rank() != 2 || weight.dim(1) != input.dim(1)) {
    throw ShapeError("linear: input " + shape_string(input.shape()) + " incompatible with weight " +
                     shape_string(weight.shape()));
  }
  const std::size_t batch = input.dim(0), in = input.dim(1), out_n = weight.dim(0);
  if (bias && (bias->rank() != 1 || bias->dim(0) != out_n)) {
    throw ShapeError("linear bias shape " + shape_string(bias->shape()) + " does not match output width " +
                     std::to_string(out_n));
  }
  Tensor out(Shape{batch, out_n});
  parallel_for(batch * out_n, [&](std::size_t item) {
    const std::size_t b = item / out_n, o = item % out_n;
    double acc = bias ? (*bias)[o] : 0.0;
    const double* x = input.data() + b * in;
    const double* w = weight.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
    out[item] = acc;
  });
  report_macs(static_cast<std::uint64_t>(batch) * out_n * in);
  return out;
}

LinearGradients linear_backward(const Tensor& output_grad, const Tensor& input,
                                const Tensor& weight) {
  const std::size_t batch = input.dim(0), in = input.dim(1), out_n = weight.dim(0);
  if (output_grad.shape() != Shape{batch, out_n}) {
    throw ShapeError("linear output_grad shape " + shape_string(output_grad.shape()) + " mismatch");
  }
  LinearGradients g{Tensor(input.shape()), Tensor(weight.shape()), Tensor(Shape{out_n})};
  parallel_for(batch, [&](std::size_t b) {
    double* gx = g.input.data() + b * in;
    for (std::size_t o = 0; o < out_n; ++o) {
      const double go = output_grad[b * out_n + o];
      const double* w = weight.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) gx[i] += go * w[i];
    }
  });
  parallel_for(out_n, [&](std::size_t o) {
    double* gw = g.weight.data() + o * in;
    double gb = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double go = output_grad[b * out_n + o];
      const double* x = input.data() + b * in;
      for (std::size_t i = 0; i < in; ++i) gw[i] += go * x[i];
      gb += go;
    }
    g.bias[o] = gb;
  });
  return g;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects [B, C], got " + shape_string(logits.shape()));
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  Tensor probs(logits.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = logits.data() + b * classes;
    double* p = probs.data() + b * classes;
    const double zmax = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[c] = std::exp(z[c] - zmax);
      sum += p[c];
    }
    for (std::size_t c = 0; c < classes; ++c) p[c] /= sum;
  }
  return probs;
}

namespace {
void check_labels(std::span<const std::size_t> labels, std::size_t batch, std::size_t classes) {
  if (labels.size() != batch) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for a batch of " + std::to_string(batch));
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= classes) {
      throw ConfigError("label " + std::to_string(labels[b]) + " at batch row " + std::to_string(b) +
                        " is outside [0, " + std::to_string(classes) + ")");
    }
  }
}
}  // namespace

SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy expects [B, C] logits");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  check_labels(labels, batch, classes);
  SoftmaxCrossEntropy r;
  r.probs = Tensor(logits.shape());
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = logits.data() + b * classes;
    double* p = r.probs.data() + b * classes;
    const double zmax = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[c] = std::exp(z[c] - zmax);
      sum += p[c];
    }
    for (std::size_t c = 0; c < classes; ++c) p[c] /= sum;
    // log p[label] = z[label] - zmax - log(sum), exact even when p underflows.
    total += -(z[labels[b]] - zmax - std::log(sum));
  }
  r.loss = total / static_cast<double>(batch);
  return r;
}

Tensor softmax_cross_entropy_backward(const Tensor& probs, std::span<const std::size_t> labels,
                                      double loss_grad) {
  const std::size_t batch = probs.dim(0), classes = probs.dim(1);
  check_labels(labels, batch, classes);
  Tensor g(probs.shape());
  const double scale = loss_grad / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < classes; ++c) {
      const double onehot = (c == labels[b]) ? 1.0 : 0.0;
      g[b * classes + c] = scale * (probs[b * classes + c] - onehot);
    }
  }
  return g;
}

}  // namespace dacnet
