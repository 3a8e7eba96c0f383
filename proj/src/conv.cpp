#include "dacnet/conv.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

#include "dacnet/errors.hpp"
#include "dacnet/mac_counter.hpp"
#include "dacnet/parallel.hpp"

namespace dacnet {

std::string_view to_string(ConvMode mode) {
  switch (mode) {
    case ConvMode::standard: return "standard";
    case ConvMode::depthwise: return "depthwise";
    case ConvMode::pointwise: return "pointwise";
  }
  return "?";
}

ConvMode parse_conv_mode(std::string_view text) {
  if (text == "standard") return ConvMode::standard;
  if (text == "depthwise") return ConvMode::depthwise;
  if (text == "pointwise") return ConvMode::pointwise;
  throw ConfigError("unknown convolution mode '" + std::string(text) + "'");
}

void ConvSpec::validate() const {
  if (kernel_size == 0 || in_channels == 0 || out_channels == 0 || stride == 0 || dilation == 0) {
    throw ConfigError("conv spec: kernel_size, channels, stride and dilation must be >= 1");
  }
  if (mode == ConvMode::depthwise && out_channels != in_channels) {
    throw ConfigError("depthwise conv needs out_channels == in_channels (got " +
                      std::to_string(in_channels) + " -> " + std::to_string(out_channels) + ")");
  }
  if (mode == ConvMode::pointwise && (kernel_size != 1 || dilation != 1)) {
    throw ConfigError("pointwise conv needs kernel_size 1 and dilation 1");
  }
}

Shape ConvSpec::kernel_shape() const {
  switch (mode) {
    case ConvMode::depthwise: return {in_channels, 1, kernel_size, kernel_size};
    case ConvMode::pointwise: return {out_channels, in_channels, 1, 1};
    case ConvMode::standard: break;
  }
  return {out_channels, in_channels, kernel_size, kernel_size};
}

std::size_t ConvSpec::output_extent(std::size_t in, std::size_t pad, std::string_view axis) const {
  const std::size_t padded = in + 2 * pad;
  if (effective_extent() > padded) {
    throw ShapeError("effective kernel extent " + std::to_string(effective_extent()) +
                     " exceeds padded input " + std::string(axis) + " " + std::to_string(padded));
  }
  return (padded - effective_extent()) / stride + 1;
}

Shape ConvSpec::output_shape(const Shape& input) const {
  validate();
  if (input.size() != 4) {
    throw ShapeError("conv input must be rank 4 [B,C,H,W], got " + shape_string(input));
  }
  if (input[1] != in_channels) {
    throw ShapeError("conv input channel dimension is " + std::to_string(input[1]) +
                     ", spec expects " + std::to_string(in_channels));
  }
  return {input[0], out_channels, output_extent(input[2], pad_h, "height"),
          output_extent(input[3], pad_w, "width")};
}

ConvSpec make_standard(std::size_t k, std::size_t in, std::size_t out, std::size_t stride,
                       std::size_t pad, std::size_t dilation) {
  return ConvSpec{k, in, out, stride, pad, pad, dilation, ConvMode::standard, false};
}

ConvSpec make_depthwise(std::size_t k, std::size_t channels, std::size_t stride, std::size_t pad,
                        std::size_t dilation) {
  return ConvSpec{k, channels, channels, stride, pad, pad, dilation, ConvMode::depthwise, false};
}

ConvSpec make_pointwise(std::size_t in, std::size_t out) {
  return ConvSpec{1, in, out, 1, 0, 0, 1, ConvMode::pointwise, false};
}

namespace {

const char* kDimNames[] = {"out_channels", "in_channels", "kernel_height", "kernel_width"};

void check_kernel(const Tensor& kernel, const ConvSpec& spec) {
  const Shape expected = spec.kernel_shape();
  if (kernel.rank() != 4) {
    throw ShapeError("kernel must be rank 4, got " + shape_string(kernel.shape()));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (kernel.dim(i) != expected[i]) {
      throw ShapeError(std::string("kernel dimension ") + kDimNames[i] + " is " +
                       std::to_string(kernel.dim(i)) + ", " + std::string(to_string(spec.mode)) +
                       " spec expects " + std::to_string(expected[i]));
    }
  }
}

void check_bias(const Tensor* bias, const ConvSpec& spec) {
  if (spec.has_bias != (bias != nullptr)) {
    throw ShapeError(spec.has_bias ? "conv spec has_bias but no bias tensor given"
                                   : "bias tensor given for a bias-free conv spec");
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != spec.out_channels)) {
    throw ShapeError("bias shape " + shape_string(bias->shape()) + " does not match out_channels " +
                     std::to_string(spec.out_channels));
  }
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline double dot_strided(const double* a, const double* b, std::size_t n, std::size_t stride) {
  if (stride == 1) return dot(a, b, n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i * stride];
  return s;
}

// Zero-padded copy of every (b, m) plane of a [B, M, H, W] tensor.
struct PaddedPlanes {
  std::size_t planes = 0, height = 0, width = 0;
  std::vector<double> values;

  const double* plane(std::size_t p) const { return values.data() + p * height * width; }
  double* plane(std::size_t p) { return values.data() + p * height * width; }
};

PaddedPlanes pad_planes(const Tensor& t, std::size_t pad_h, std::size_t pad_w) {
  PaddedPlanes out;
  out.planes = t.dim(0) * t.dim(1);
  const std::size_t h = t.dim(2), w = t.dim(3);
  out.height = h + 2 * pad_h;
  out.width = w + 2 * pad_w;
  out.values.assign(out.planes * out.height * out.width, 0.0);
  parallel_for(out.planes, [&](std::size_t p) {
    const double* src = t.data() + p * h * w;
    double* dst = out.plane(p);
    for (std::size_t r = 0; r < h; ++r) {
      std::copy_n(src + r * w, w, dst + (r + pad_h) * out.width + pad_w);
    }
  });
  return out;
}

// Standard / depthwise forward over padded planes. `dilation` is a template-free
// runtime value; the undilated entry point passes 1.
Tensor spatial_forward(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                       const ConvSpec& spec, std::size_t dilation) {
  const Shape out_shape = spec.output_shape(input.shape());
  check_kernel(kernel, spec);
  check_bias(bias, spec);
  const std::size_t batch = input.dim(0), in_ch = spec.in_channels, out_ch = spec.out_channels;
  const std::size_t oh_n = out_shape[2], ow_n = out_shape[3], k = spec.kernel_size;
  const std::size_t s = spec.stride;
  const bool depthwise = spec.mode == ConvMode::depthwise;

  const PaddedPlanes padded = pad_planes(input, spec.pad_h, spec.pad_w);
  const std::size_t wp = padded.width;
  Tensor out(out_shape);
  std::vector<std::uint64_t> macs(batch * out_ch, 0);

  parallel_for(batch * out_ch, [&](std::size_t item) {
    const std::size_t b = item / out_ch, n = item % out_ch;
    double* o = out.data() + item * oh_n * ow_n;
    std::fill_n(o, oh_n * ow_n, bias ? (*bias)[n] : 0.0);
    const std::size_t m_begin = depthwise ? n : 0;
    const std::size_t m_end = depthwise ? n + 1 : in_ch;
    std::uint64_t count = 0;
    for (std::size_t m = m_begin; m < m_end; ++m) {
      const double* src_plane = padded.plane(b * in_ch + m);
      const double* kern = kernel.data() + (depthwise ? n : n * in_ch + m) * k * k;
      for (std::size_t kh = 0; kh < k; ++kh) {
        for (std::size_t kw = 0; kw < k; ++kw) {
          const double w = kern[kh * k + kw];
          for (std::size_t oh = 0; oh < oh_n; ++oh) {
            const double* src = src_plane + (oh * s + kh * dilation) * wp + kw * dilation;
            double* dst = o + oh * ow_n;
            if (s == 1) {
              for (std::size_t ow = 0; ow < ow_n; ++ow) dst[ow] += w * src[ow];
            } else {
              for (std::size_t ow = 0; ow < ow_n; ++ow) dst[ow] += w * src[ow * s];
            }
            count += ow_n;
          }
        }
      }
    }
    macs[item] = count;
  });
  std::uint64_t total = 0;
  for (auto c : macs) total += c;
  report_macs(total);
  return out;
}

// Gathers the strided sample grid of a pointwise conv into [B, M, OH*OW].
std::vector<double> gather_pointwise(const Tensor& input, std::size_t stride, std::size_t oh_n,
                                     std::size_t ow_n) {
  const std::size_t planes = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
  std::vector<double> g(planes * oh_n * ow_n);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oh = 0; oh < oh_n; ++oh) {
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        g[(p * oh_n + oh) * ow_n + ow] = input[(p * h + oh * stride) * w + ow * stride];
      }
    }
  }
  return g;
}

constexpr std::size_t kChannelBlock = 4;

Tensor pointwise_forward(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                         const ConvSpec& spec) {
  const Shape out_shape = spec.output_shape(input.shape());
  check_kernel(kernel, spec);
  check_bias(bias, spec);
  const std::size_t batch = input.dim(0), in_ch = spec.in_channels, out_ch = spec.out_channels;
  const std::size_t positions = out_shape[2] * out_shape[3];

  std::vector<double> gathered;
  const double* x = input.data();
  if (spec.stride != 1) {
    gathered = gather_pointwise(input, spec.stride, out_shape[2], out_shape[3]);
    x = gathered.data();
  }

  Tensor out(out_shape);
  const std::size_t blocks = (out_ch + kChannelBlock - 1) / kChannelBlock;
  parallel_for(batch * blocks, [&](std::size_t item) {
    const std::size_t b = item / blocks;
    const std::size_t n0 = (item % blocks) * kChannelBlock;
    const std::size_t nb = std::min(kChannelBlock, out_ch - n0);
    double* rows[kChannelBlock];
    for (std::size_t j = 0; j < nb; ++j) {
      rows[j] = out.data() + (b * out_ch + n0 + j) * positions;
      std::fill_n(rows[j], positions, bias ? (*bias)[n0 + j] : 0.0);
    }
    const double* xb = x + b * in_ch * positions;
    for (std::size_t m = 0; m < in_ch; ++m) {
      const double* src = xb + m * positions;
      if (nb == kChannelBlock) {
        const double w0 = kernel[(n0 + 0) * in_ch + m], w1 = kernel[(n0 + 1) * in_ch + m];
        const double w2 = kernel[(n0 + 2) * in_ch + m], w3 = kernel[(n0 + 3) * in_ch + m];
        double *r0 = rows[0], *r1 = rows[1], *r2 = rows[2], *r3 = rows[3];
        for (std::size_t p = 0; p < positions; ++p) {
          const double v = src[p];
          r0[p] += w0 * v;
          r1[p] += w1 * v;
          r2[p] += w2 * v;
          r3[p] += w3 * v;
        }
      } else {
        for (std::size_t j = 0; j < nb; ++j) {
          const double w = kernel[(n0 + j) * in_ch + m];
          double* r = rows[j];
          for (std::size_t p = 0; p < positions; ++p) r[p] += w * src[p];
        }
      }
    }
  });
  // Every (b, n, m) triple above ran a full sweep over the output positions.
  report_macs(static_cast<std::uint64_t>(batch) * out_ch * in_ch * positions);
  return out;
}

ConvGradients spatial_backward(const Tensor& gout, const Tensor& input, const Tensor& kernel,
                               const ConvSpec& spec) {
  const std::size_t batch = input.dim(0), in_ch = spec.in_channels, out_ch = spec.out_channels;
  const std::size_t oh_n = gout.dim(2), ow_n = gout.dim(3), k = spec.kernel_size;
  const std::size_t s = spec.stride, d = spec.dilation;
  const std::size_t h = input.dim(2), w = input.dim(3);
  const bool depthwise = spec.mode == ConvMode::depthwise;

  ConvGradients grads{Tensor(input.shape()), Tensor(kernel.shape()), std::nullopt};

  // Input gradient: each (b, m) plane owns its padded accumulation buffer.
  const std::size_t hp = h + 2 * spec.pad_h, wp = w + 2 * spec.pad_w;
  parallel_for(batch * in_ch, [&](std::size_t item) {
    const std::size_t b = item / in_ch, m = item % in_ch;
    std::vector<double> gpad(hp * wp, 0.0);
    const std::size_t n_begin = depthwise ? m : 0;
    const std::size_t n_end = depthwise ? m + 1 : out_ch;
    for (std::size_t n = n_begin; n < n_end; ++n) {
      const double* g = gout.data() + (b * out_ch + n) * oh_n * ow_n;
      const double* kern = kernel.data() + (depthwise ? m : n * in_ch + m) * k * k;
      for (std::size_t kh = 0; kh < k; ++kh) {
        for (std::size_t kw = 0; kw < k; ++kw) {
          const double wv = kern[kh * k + kw];
          for (std::size_t oh = 0; oh < oh_n; ++oh) {
            double* dst = gpad.data() + (oh * s + kh * d) * wp + kw * d;
            const double* src = g + oh * ow_n;
            for (std::size_t ow = 0; ow < ow_n; ++ow) dst[ow * s] += wv * src[ow];
          }
        }
      }
    }
    double* gi = grads.input.data() + item * h * w;
    for (std::size_t r = 0; r < h; ++r) {
      std::copy_n(gpad.data() + (r + spec.pad_h) * wp + spec.pad_w, w, gi + r * w);
    }
  });

  // Kernel gradient: each kernel plane owns its K*K taps.
  const PaddedPlanes padded = pad_planes(input, spec.pad_h, spec.pad_w);
  const std::size_t kernel_planes = depthwise ? in_ch : out_ch * in_ch;
  parallel_for(kernel_planes, [&](std::size_t item) {
    const std::size_t n = depthwise ? item : item / in_ch;
    const std::size_t m = depthwise ? item : item % in_ch;
    double* gk = grads.kernel.data() + item * k * k;
    for (std::size_t kh = 0; kh < k; ++kh) {
      for (std::size_t kw = 0; kw < k; ++kw) {
        double acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
          const double* g = gout.data() + (b * out_ch + n) * oh_n * ow_n;
          const double* x = padded.plane(b * in_ch + m);
          for (std::size_t oh = 0; oh < oh_n; ++oh) {
            acc += dot_strided(g + oh * ow_n, x + (oh * s + kh * d) * wp + kw * d, ow_n, s);
          }
        }
        gk[kh * k + kw] = acc;
      }
    }
  });
  return grads;
}

ConvGradients pointwise_backward(const Tensor& gout, const Tensor& input, const Tensor& kernel,
                                 const ConvSpec& spec) {
  const std::size_t batch = input.dim(0), in_ch = spec.in_channels, out_ch = spec.out_channels;
  const std::size_t oh_n = gout.dim(2), ow_n = gout.dim(3), positions = oh_n * ow_n;
  const std::size_t s = spec.stride;
  ConvGradients grads{Tensor(input.shape()), Tensor(kernel.shape()), std::nullopt};

  // dX[b, m, p] = sum_n W[n, m] dY[b, n, p], written on the strided grid.
  std::vector<double> gx_dense;
  double* gx = grads.input.data();
  if (s != 1) {
    gx_dense.assign(batch * in_ch * positions, 0.0);
    gx = gx_dense.data();
  }
  const std::size_t blocks = (in_ch + kChannelBlock - 1) / kChannelBlock;
  parallel_for(batch * blocks, [&](std::size_t item) {
    const std::size_t b = item / blocks;
    const std::size_t m0 = (item % blocks) * kChannelBlock;
    const std::size_t mb = std::min(kChannelBlock, in_ch - m0);
    for (std::size_t n = 0; n < out_ch; ++n) {
      const double* g = gout.data() + (b * out_ch + n) * positions;
      for (std::size_t j = 0; j < mb; ++j) {
        const double wv = kernel[n * in_ch + m0 + j];
        double* dst = gx + (b * in_ch + m0 + j) * positions;
        for (std::size_t p = 0; p < positions; ++p) dst[p] += wv * g[p];
      }
    }
  });
  if (s != 1) {
    const std::size_t h = input.dim(2), w = input.dim(3);
    for (std::size_t plane = 0; plane < batch * in_ch; ++plane) {
      for (std::size_t oh = 0; oh < oh_n; ++oh) {
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          grads.input[(plane * h + oh * s) * w + ow * s] = gx_dense[(plane * oh_n + oh) * ow_n + ow];
        }
      }
    }
  }

  std::vector<double> gathered;
  const double* x = input.data();
  if (s != 1) {
    gathered = gather_pointwise(input, s, oh_n, ow_n);
    x = gathered.data();
  }
  parallel_for(out_ch, [&](std::size_t n) {
    for (std::size_t m = 0; m < in_ch; ++m) {
      double acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        acc += dot(gout.data() + (b * out_ch + n) * positions, x + (b * in_ch + m) * positions,
                   positions);
      }
      grads.kernel[n * in_ch + m] = acc;
    }
  });
  return grads;
}

}  // namespace

namespace kernels {

Tensor conv2d_dilated(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                      const ConvSpec& spec) {
  return spatial_forward(input, kernel, bias, spec, spec.dilation);
}

Tensor conv2d_undilated(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                        const ConvSpec& spec) {
  if (spec.dilation != 1) throw ConfigError("undilated conv path called with dilation != 1");
  return spatial_forward(input, kernel, bias, spec, 1);
}

}  // namespace kernels

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                      const ConvSpec& spec) {
  spec.validate();
  if (spec.mode == ConvMode::pointwise && spec.pad_h == 0 && spec.pad_w == 0) {
    return pointwise_forward(input, kernel, bias, spec);
  }
  if (spec.dilation == 1) return kernels::conv2d_undilated(input, kernel, bias, spec);
  return kernels::conv2d_dilated(input, kernel, bias, spec);
}

ConvGradients conv2d_backward(const Tensor& output_grad, const Tensor& input,
                              const Tensor& kernel, const ConvSpec& spec) {
  const Shape expected = spec.output_shape(input.shape());
  check_kernel(kernel, spec);
  if (output_grad.shape() != expected) {
    throw ShapeError("conv output_grad shape " + shape_string(output_grad.shape()) +
                     " does not match forward output " + shape_string(expected));
  }
  ConvGradients grads = (spec.mode == ConvMode::pointwise && spec.pad_h == 0 && spec.pad_w == 0)
                            ? pointwise_backward(output_grad, input, kernel, spec)
                            : spatial_backward(output_grad, input, kernel, spec);
  if (spec.has_bias) {
    const std::size_t batch = expected[0], out_ch = expected[1];
    const std::size_t positions = expected[2] * expected[3];
    Tensor gb(Shape{out_ch});
    parallel_for(out_ch, [&](std::size_t n) {
      double acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* g = output_grad.data() + (b * out_ch + n) * positions;
        for (std::size_t p = 0; p < positions; ++p) acc += g[p];
      }
      gb[n] = acc;
    });
    grads.bias = std::move(gb);
  }
  return grads;
}

}  // namespace dacnet
