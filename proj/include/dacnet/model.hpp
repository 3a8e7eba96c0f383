#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dacnet/autograd.hpp"
#include "dacnet/layers.hpp"
#include "dacnet/network_config.hpp"

namespace dacnet {

inline constexpr std::size_t kDepthwiseKernel = 3;

struct NamedParameter {
  std::string name;
  Var var;
};

// Convolution followed by batch normalization and an optional ReLU.
struct ConvBnLayer {
  std::string name;
  ConvSpec spec;
  Var weight;
  Var gamma;
  Var beta;
  RunningStats stats;
  bool relu = true;
};

struct DscBlock {
  BlockInstance instance;
  ConvBnLayer expand;     // 1x1, in -> t*in, BN, ReLU
  ConvBnLayer depthwise;  // 3x3 dilated, BN, ReLU
  ConvBnLayer project;    // 1x1, t*in -> out, BN
  bool residual = false;
};

struct DenseLayer {
  std::string name;
  Var weight;  // [O, I]
  Var bias;    // [O]
};

struct ForwardResult {
  Var logits;                         // [B, num_classes]
  std::vector<Var> scale_embeddings;  // O1..On, shallowest first, each [B, projection]
  Var embedding;                      // E, concatenation of the scale embeddings
};

/// The input stage, dilated DSC blocks, multi-scale embedding and dense head
/// described by a NetworkConfig.
class Model {
 public:
  /// Builds the layers and initializes kernels from N(0, 2 / fan_in) using `seed`.
  Model(NetworkConfig config, std::uint64_t seed);

  // Parameters are shared handles; copying would alias them.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const NetworkConfig& config() const { return config_; }

  /// Input [B, C, F, T]. Train mode uses batch statistics and updates running stats.
  /// With a tape, every operation is recorded for a later backward pass.
  ForwardResult forward(const Tensor& input, Mode mode, Tape* tape = nullptr);

  /// Trainable parameters in declaration order.
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::size_t trainable_scalar_count() const;

  /// Running statistics in declaration order.
  std::vector<RunningStats*> running_stats();
  std::vector<const RunningStats*> running_stats() const;

  void zero_grad();

  /// "DACM" checkpoint: magic, version byte, u64 config JSON length, JSON bytes,
  /// trainable parameters then running statistics as f64 little-endian values.
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  ConvBnLayer make_conv_bn(const std::string& name, const ConvSpec& spec, bool relu,
                           std::mt19937_64& rng);
  Var conv_bn(ConvBnLayer& layer, const Var& x, Mode mode, Tape* tape);

  NetworkConfig config_;
  std::uint64_t seed_;
  std::vector<NamedParameter> params_;
  ConvBnLayer input_;
  std::vector<DscBlock> blocks_;
  std::vector<ConvBnLayer> projections_;
  std::vector<DenseLayer> head_;
};

inline constexpr std::uint8_t kModelFileVersion = 1;

}  // namespace dacnet
