#include "dacnet/feature_cache.hpp"

#include <cmath>
#include <cstdlib>
#include <optional>

#include "dacnet/binary_io.hpp"
#include "dacnet/errors.hpp"
#include "dacnet/parallel.hpp"
#include "dacnet/wav.hpp"

namespace dacnet {

std::size_t segment_samples(const FrontendConfig& config) {
  return static_cast<std::size_t>(std::llround(kSegmentSeconds * config.sample_rate));
}

std::vector<double> fit_segment(std::vector<double> samples, const FrontendConfig& config) {
  const std::size_t want = segment_samples(config);
  const std::size_t slack = config.hop_samples();
  if (samples.size() + slack < want) {
    throw DataError("segment has " + std::to_string(samples.size()) + " samples, expected " +
                    std::to_string(want) + " (10 s) within one hop");
  }
  if (samples.size() <= want + slack) {
    samples.resize(want, 0.0);
    return samples;
  }
  const std::size_t offset = (samples.size() - want) / 2;
  return {samples.begin() + static_cast<std::ptrdiff_t>(offset),
          samples.begin() + static_cast<std::ptrdiff_t>(offset + want)};
}

Tensor features_for_file(const std::filesystem::path& audio, const FrontendConfig& config) {
  WavAudio wav = read_wav(audio);
  if (wav.sample_rate != config.sample_rate) {
    throw DataError(audio.string() + ": sample rate " + std::to_string(wav.sample_rate) + " Hz, expected " +
                    std::to_string(config.sample_rate) + " Hz (no resampling)");
  }
  try {
    return extract_features(fit_segment(std::move(wav.samples), config), config);
  } catch (const DataError& e) {
    throw DataError(audio.string() + ": " + e.what());
  }
}

std::filesystem::path resolve_cache_root(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("DACNET_CACHE"); env != nullptr && *env != '\0') return env;
  return fallback;
}

std::filesystem::path cache_entry_path(const std::filesystem::path& root, const FrontendConfig& config,
                                       const std::filesystem::path& audio) {
  const std::string key = std::filesystem::absolute(audio).lexically_normal().generic_string();
  return root / io::hex64(config.fingerprint()) / (io::hex64(io::fnv1a64(key)) + ".dacf");
}

namespace {

std::optional<Tensor> read_valid_entry(const std::filesystem::path& entry, const FrontendConfig& config) {
  if (!std::filesystem::is_regular_file(entry)) return std::nullopt;
  try {
    FeatureRecord rec = read_feature_file(entry);
    if (rec.fingerprint != config.fingerprint() || rec.values.dim(1) != config.mel_bins) return std::nullopt;
    return std::move(rec.values);
  } catch (const DataError&) {
    return std::nullopt;
  }
}

// Writes through a temporary name so readers never observe a partial entry.
void write_entry(const std::filesystem::path& entry, const Tensor& values, const FrontendConfig& config) {
  std::filesystem::create_directories(entry.parent_path());
  const std::filesystem::path tmp = entry.string() + ".tmp";
  write_feature_file(tmp, values, config.fingerprint());
  std::filesystem::rename(tmp, entry);
}

struct Slot {
  std::optional<Tensor> values;
  bool hit = false;
  std::string error;
};

std::vector<Slot> fill(const DatasetManifest& manifest, std::span<const ManifestRow> rows,
                       const FrontendConfig& config, const std::filesystem::path& root, bool keep_values) {
  config.validate();
  std::vector<Slot> slots(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    const std::filesystem::path audio = manifest.resolve(rows[i]);
    const std::filesystem::path entry = cache_entry_path(root, config, audio);
    Slot& slot = slots[i];
    try {
      if (auto cached = read_valid_entry(entry, config)) {
        slot.hit = true;
        if (keep_values) slot.values = std::move(cached);
        return;
      }
      Tensor values = features_for_file(audio, config);
      write_entry(entry, values, config);
      if (keep_values) slot.values = std::move(values);
    } catch (const std::exception& e) {
      slot.error = e.what();
    }
  });
  return slots;
}

}  // namespace

CacheStats build_feature_cache(const DatasetManifest& manifest, const FrontendConfig& config,
                               const std::filesystem::path& root) {
  CacheStats stats;
  for (const Slot& s : fill(manifest, manifest.rows, config, root, false)) {
    if (!s.error.empty()) stats.errors.push_back(s.error);
    else if (s.hit) ++stats.hits;
    else ++stats.computed;
  }
  return stats;
}

Dataset load_split(const DatasetManifest& manifest, Split split, const FrontendConfig& config,
                   const std::filesystem::path& root) {
  const auto rows = manifest.split(split);
  auto slots = fill(manifest, rows, config, root, true);
  Dataset data;
  std::string errors;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!slots[i].error.empty()) {
      ++failed;
      errors += "\n  " + slots[i].error;
      continue;
    }
    data.inputs.push_back(std::move(*slots[i].values));
    data.labels.push_back(rows[i].label);
  }
  if (failed > 0) {
    throw DataError(std::to_string(failed) + " file(s) in split '" + std::string(to_string(split)) +
                    "' failed:" + errors);
  }
  return data;
}

}  // namespace dacnet
