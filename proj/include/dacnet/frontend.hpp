#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "dacnet/tensor.hpp"

namespace dacnet {

// How the three network input channels are filled.
enum class InputChannels { deltas, replicate };

struct FrontendConfig {
  unsigned sample_rate = 16000;
  double frame_length_ms = 40.0;
  double frame_hop_ms = 20.0;
  std::size_t mel_bins = 28;
  std::size_t fft_size = 1024;
  std::size_t delta_window = 2;
  InputChannels channels = InputChannels::deltas;

  std::size_t frame_samples() const;
  std::size_t hop_samples() const;

  /// Throws ConfigError on hop > length, fft_size < frame samples, mel_bins < 2,
  /// delta_window < 1 or a sample rate other than 16 kHz.
  void validate() const;

  /// Stable text form of every field; the fingerprint hashes it.
  std::string canonical() const;
  std::uint64_t fingerprint() const;

  bool operator==(const FrontendConfig&) const = default;
};

inline constexpr double kLogFloor = 1e-10;

/// floor((samples - frame) / hop) + 1; throws DataError when samples < frame.
std::size_t frame_count(std::size_t samples, const FrontendConfig& config);

/// Hann-windowed power spectrogram, [fft_size / 2 + 1, n_frames].
Tensor stft_power(std::span<const double> audio, const FrontendConfig& config);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Weight of triangular band `band` at frequency `hz` (HTK mel scale, bands
/// spanning 0 to Nyquist). Continuous in hz, peaks at 1 on the band center.
double mel_band_weight(const FrontendConfig& config, std::size_t band, double hz);
double mel_band_center_hz(const FrontendConfig& config, std::size_t band);

/// [mel_bins, fft_size / 2 + 1] filterbank sampled at the FFT bin frequencies.
Tensor mel_filterbank(const FrontendConfig& config);

/// ln(max(filterbank . power, 1e-10)), [mel_bins, n_frames].
Tensor mel_project_log(const Tensor& power, const FrontendConfig& config);

/// Regression delta over +-window frames with edge replication, same shape as input
/// [bins, n_frames].
Tensor delta(const Tensor& features, std::size_t window);

/// Stacks static, delta and delta-delta into [3, bins, n_frames].
Tensor add_deltas(const Tensor& static_features, std::size_t window);

/// Full pipeline: audio -> [3, mel_bins, n_frames].
Tensor extract_features(std::span<const double> audio, const FrontendConfig& config);

// ---- "DACF" feature files --------------------------------------------------
//   4 bytes  "DACF"
//   1 byte   version (1)
//   8 bytes  frontend fingerprint, u64 little-endian
//   12 bytes shape triple, 3 x u32 little-endian
//   then     shape product x f64 little-endian values

inline constexpr std::uint8_t kFeatureFileVersion = 1;

struct FeatureRecord {
  std::uint64_t fingerprint = 0;
  Tensor values;
};

void write_feature_file(const std::filesystem::path& path, const Tensor& values,
                        std::uint64_t fingerprint);

/// Throws DataError on bad magic, unknown version, truncation or a non-rank-3 shape.
FeatureRecord read_feature_file(const std::filesystem::path& path);

}  // namespace dacnet
