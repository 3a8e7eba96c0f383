#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dacnet/conv.hpp"
#include "dacnet/network_config.hpp"
#include "json.hpp"

namespace dacnet {

// Cost conventions: one multiply-accumulate is one MAC. Convolutions and dense
// layers contribute MACs; batch norm, ReLU, pooling and residual adds do not.

/// depthwise K^2 M H'W', pointwise N M H'W', standard K^2 N M H'W' (per sample).
std::uint64_t layer_macs(const ConvSpec& spec, std::uint64_t out_h, std::uint64_t out_w);

/// depthwise K^2 M, pointwise M N, standard K^2 M N; plus out_channels with a bias.
std::uint64_t layer_params(const ConvSpec& spec);

std::uint64_t batchnorm_params(std::uint64_t channels);
std::uint64_t linear_params(std::uint64_t in, std::uint64_t out, bool bias = true);
std::uint64_t linear_macs(std::uint64_t in, std::uint64_t out);

/// Exact non-negative fraction, always reduced.
struct Fraction {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Fraction make(std::uint64_t num, std::uint64_t den);
  Fraction operator+(const Fraction& o) const;
  bool operator==(const Fraction&) const = default;
  std::string str() const;
};

struct ComplexityRow {
  std::string layer;
  std::string kind;  // conv-standard, conv-depthwise, conv-pointwise, batchnorm, linear
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  Shape output_shape;
};

struct ComplexityReport {
  std::string network;
  Shape input_shape;
  std::vector<ComplexityRow> rows;
  std::uint64_t total_params = 0;   // PS
  std::uint64_t total_macs = 0;     // MAO
  std::uint64_t batchnorm_params = 0;
  std::uint64_t weighted_layers = 0;  // conv + dense layers

  std::uint64_t params_without_batchnorm() const { return total_params - batchnorm_params; }
  double params_millions() const { return static_cast<double>(total_params) / 1e6; }
  double macs_billions() const { return static_cast<double>(total_macs) / 1e9; }
};

/// Walks the layers a Model built from `config` would execute on an input of
/// `input_shape` ([B, C, F, T]) and accounts every row. Propagates ShapeError.
ComplexityReport analyze_network(const NetworkConfig& config, const Shape& input_shape);

struct BaselineRow {
  std::string method;
  double params_millions;
  double macs_billions;
  double accuracy;
};

/// Published reference numbers for the lightweight baselines and the proposed network.
const std::vector<BaselineRow>& published_baselines();
inline constexpr double kPublishedParamsMillions = 2.67;
inline constexpr double kPublishedMacsBillions = 0.44;

/// Signed relative deviation of the report's PS and MAO from the published totals.
struct PublishedDeviation {
  double params_fraction;
  double macs_fraction;
};
PublishedDeviation published_deviation(const ComplexityReport& report);
extern const char* const kReconstructionNote;

std::string render_text(const ComplexityReport& report, bool with_baselines = true);
nlohmann::json render_json(const ComplexityReport& report);

}  // namespace dacnet
