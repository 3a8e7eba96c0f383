#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "dacnet/tensor.hpp"

namespace dacnet {

enum class ConvMode { standard, depthwise, pointwise };

std::string_view to_string(ConvMode mode);
ConvMode parse_conv_mode(std::string_view text);

/// Parameterization of one 2-d convolution layer over [B, C, H, W] tensors.
///
/// Output position (oh, ow) of channel n reads input rows oh*stride + kh*dilation - pad_h
/// and columns ow*stride + kw*dilation - pad_w (cross-correlation, no kernel flip, zero
/// padding). A dilation of 1 is ordinary convolution.
///
/// Kernel layouts:
///   standard  [N, M, K, K]
///   depthwise [M, 1, K, K]   (N == M, channel m only sees input channel m)
///   pointwise [N, M, 1, 1]
struct ConvSpec {
  std::size_t kernel_size = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t stride = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t dilation = 1;
  ConvMode mode = ConvMode::standard;
  bool has_bias = false;

  /// Throws ConfigError when the mode invariants are violated.
  void validate() const;

  Shape kernel_shape() const;
  std::size_t effective_extent() const { return dilation * (kernel_size - 1) + 1; }

  /// floor((in + 2 pad - dilation (K - 1) - 1) / stride) + 1; throws ShapeError when the
  /// effective kernel does not fit inside the padded extent.
  std::size_t output_extent(std::size_t in, std::size_t pad, std::string_view axis = "height") const;

  /// Output shape for an input of shape [B, M, H, W]; validates the input.
  Shape output_shape(const Shape& input) const;

  bool operator==(const ConvSpec&) const = default;
};

ConvSpec make_standard(std::size_t k, std::size_t in, std::size_t out, std::size_t stride = 1,
                       std::size_t pad = 0, std::size_t dilation = 1);
ConvSpec make_depthwise(std::size_t k, std::size_t channels, std::size_t stride = 1,
                        std::size_t pad = 0, std::size_t dilation = 1);
ConvSpec make_pointwise(std::size_t in, std::size_t out);

/// Direct-loop convolution. `bias` must be given exactly when spec.has_bias.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                      const ConvSpec& spec);

struct ConvGradients {
  Tensor input;
  Tensor kernel;
  std::optional<Tensor> bias;
};

/// Exact adjoint of conv2d_forward with respect to input, kernel and bias.
ConvGradients conv2d_backward(const Tensor& output_grad, const Tensor& input,
                              const Tensor& kernel, const ConvSpec& spec);

namespace kernels {

// The two forward paths conv2d_forward dispatches between for standard and
// depthwise modes. conv2d_undilated rejects dilation != 1.
Tensor conv2d_dilated(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                      const ConvSpec& spec);
Tensor conv2d_undilated(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                        const ConvSpec& spec);

}  // namespace kernels

}  // namespace dacnet
