#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dacnet/conv.hpp"
#include "json.hpp"

namespace dacnet {

/// One row of the block table: (in, out, stride, repeats) plus the expansion
/// factor of the first pointwise layer and the dilation of the depthwise layer.
struct BlockSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  std::size_t repeats = 1;
  std::size_t expansion = 6;
  std::size_t dilation = 2;

  bool operator==(const BlockSpec&) const = default;
};

/// A single block after expanding repeats. Only the first instance of a row
/// carries the row's stride and channel change.
struct BlockInstance {
  std::size_t row = 0;
  std::size_t repeat = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  std::size_t expansion = 1;
  std::size_t dilation = 1;

  std::size_t hidden_channels() const { return in_channels * expansion; }
};

struct NetworkConfig {
  std::string name = "custom";
  ConvSpec input_conv = make_standard(3, 3, 32, 2, 1);
  std::vector<BlockSpec> blocks;
  std::vector<std::size_t> mse_taps;  // block-instance indices; empty means the last three
  std::size_t mse_projection_channels = 1280;
  std::size_t num_classes = 9;
  bool dilation_enabled = true;
  bool mse_enabled = true;
  bool residual_enabled = true;
  bool literal_fc_head = false;
  std::size_t fc_hidden = 1280;  // width of the hidden dense layer when literal_fc_head
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;

  std::vector<BlockInstance> instances() const;

  /// Taps in use, shallowest first: every configured tap with MSE on, only the
  /// deepest one with MSE off.
  std::vector<std::size_t> active_taps() const;

  /// Dilation actually applied to a depthwise layer (1 when dilation is disabled).
  std::size_t depthwise_dilation(const BlockInstance& block) const;
  bool has_residual(const BlockInstance& block) const;

  std::size_t embedding_width() const { return active_taps().size() * mse_projection_channels; }

  /// Throws ConfigError naming the offending block or tap.
  void validate() const;

  bool operator==(const NetworkConfig&) const = default;
};

nlohmann::json to_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const nlohmann::json& j);

/// Built-in configurations: "paper-2021" (default), "paper-2021-mbv2-rows",
/// "toy-synth", "mini".
NetworkConfig network_preset(std::string_view name);
std::vector<std::string> network_preset_names();

/// A preset name or a path to a JSON file.
NetworkConfig load_network_config(const std::string& name_or_path);

enum class Ablation { full, no_dco, no_mse };

Ablation parse_ablation(std::string_view text);
std::string_view to_string(Ablation which);

NetworkConfig ablation_variant(NetworkConfig config, Ablation which);

/// Receptive field (in input frames/bins, per axis) of the deepest active tap,
/// from r' = r + (k - 1) * d * jump, jump' = jump * s.
std::size_t receptive_field(const NetworkConfig& config);

}  // namespace dacnet
