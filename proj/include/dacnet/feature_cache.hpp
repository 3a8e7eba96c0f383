#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dacnet/frontend.hpp"
#include "dacnet/manifest.hpp"
#include "dacnet/trainer.hpp"

namespace dacnet {

inline constexpr double kSegmentSeconds = 10.0;

/// Samples of one segment at the configured rate.
std::size_t segment_samples(const FrontendConfig& config);

/// Fits audio to exactly one segment: lengths within one hop of the segment are
/// zero-padded or trimmed at the end, longer audio is center-cropped, shorter
/// audio throws DataError.
std::vector<double> fit_segment(std::vector<double> samples, const FrontendConfig& config);

/// Reads a WAV, rejects a sample rate other than config.sample_rate, fits the
/// segment and extracts [3, mel_bins, frames] features.
Tensor features_for_file(const std::filesystem::path& audio, const FrontendConfig& config);

/// DACNET_CACHE when set, otherwise `fallback`.
std::filesystem::path resolve_cache_root(const std::filesystem::path& fallback);

/// `<root>/<fingerprint hex>/<hash of the absolute audio path, hex>.dacf`
std::filesystem::path cache_entry_path(const std::filesystem::path& root, const FrontendConfig& config,
                                       const std::filesystem::path& audio);

struct CacheStats {
  std::size_t hits = 0;
  std::size_t computed = 0;
  std::vector<std::string> errors;  // one line per failed file
};

/// Ensures an up-to-date entry for every row (or only `rows` when given).
/// Entries that are unreadable, corrupted or carry another fingerprint are
/// recomputed. Files are processed in parallel; failures are collected, not thrown.
CacheStats build_feature_cache(const DatasetManifest& manifest, const FrontendConfig& config,
                               const std::filesystem::path& root);

/// Loads one split from the cache, computing missing entries. Throws DataError
/// listing every failed file.
Dataset load_split(const DatasetManifest& manifest, Split split, const FrontendConfig& config,
                   const std::filesystem::path& root);

}  // namespace dacnet
