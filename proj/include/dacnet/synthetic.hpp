#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dacnet/manifest.hpp"

namespace dacnet {

struct ClassSignature {
  std::vector<double> tones_hz;
  double noise_low_hz = 0.0;
  double noise_high_hz = 0.0;
  double am_rate_hz = 0.0;

  bool operator==(const ClassSignature&) const = default;
};

struct SyntheticSpec {
  std::vector<ClassSignature> classes;  // one per class index
  std::size_t train_per_class = 60;
  std::size_t validation_per_class = 10;
  std::size_t test_per_class = 20;
  std::uint64_t seed = 1;
  unsigned sample_rate = 16000;
  std::size_t samples_per_segment = 160000;

  std::size_t per_class(Split split) const;
  /// Throws ConfigError on a class count other than kNumClasses, band edges outside
  /// (0, Nyquist) or pairwise identical signatures.
  void validate() const;
};

/// Nine distinct signatures spread over the mel range.
SyntheticSpec default_synthetic_spec();

/// One segment of class `label`: jittered tones plus band-passed noise under a
/// class-rate AM envelope, a weak off-class tone at random, and broadband
/// background. Depends only on (spec.seed, label, split, index).
std::vector<double> synthesize_segment(const SyntheticSpec& spec, std::size_t label, Split split,
                                       std::size_t index);

/// Writes `<out_dir>/audio/<split>/<class>_<index>.wav` for every segment and
/// `<out_dir>/manifest.csv`; returns the manifest.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace dacnet
