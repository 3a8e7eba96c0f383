#include "dacnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "dacnet/errors.hpp"
#include "dacnet/parallel.hpp"
#include "dacnet/wav.hpp"

namespace dacnet {

std::size_t SyntheticSpec::per_class(Split split) const {
  switch (split) {
    case Split::train: return train_per_class;
    case Split::validation: return validation_per_class;
    case Split::test: return test_per_class;
  }
  return 0;
}

void SyntheticSpec::validate() const {
  if (classes.size() != kNumClasses) {
    throw ConfigError("synthetic spec needs " + std::to_string(kNumClasses) + " class signatures");
  }
  const double nyquist = sample_rate / 2.0;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto& c = classes[k];
    const std::string where = "synthetic class " + std::to_string(k);
    if (!(c.noise_low_hz > 0.0 && c.noise_low_hz < c.noise_high_hz && c.noise_high_hz < nyquist)) {
      throw ConfigError(where + ": noise band must satisfy 0 < low < high < Nyquist");
    }
    for (double f : c.tones_hz) {
      if (!(f > 0.0 && f < nyquist)) throw ConfigError(where + ": tone outside (0, Nyquist)");
    }
    if (!(c.am_rate_hz >= 0.0)) throw ConfigError(where + ": negative AM rate");
    for (std::size_t j = 0; j < k; ++j) {
      if (classes[j] == c) throw ConfigError(where + " duplicates class " + std::to_string(j));
    }
  }
  if (samples_per_segment == 0) throw ConfigError("synthetic segments must be non-empty");
}

SyntheticSpec default_synthetic_spec() {
  SyntheticSpec spec;
  spec.classes = {
      {{250.0}, 80.0, 300.0, 0.5},
      {{440.0, 880.0}, 2000.0, 4000.0, 1.0},
      {{1200.0}, 3000.0, 6000.0, 4.0},
      {{600.0, 1500.0}, 300.0, 900.0, 2.0},
      {{3000.0}, 500.0, 1500.0, 0.25},
      {{330.0, 990.0, 1650.0}, 800.0, 2400.0, 3.0},
      {{180.0}, 1000.0, 7000.0, 0.1},
      {{700.0, 2100.0}, 150.0, 600.0, 6.0},
      {{5000.0}, 4000.0, 7500.0, 8.0},
  };
  return spec;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Two cascaded constant-peak-gain band-pass biquads centred on the band's geometric mean.
void band_pass(std::vector<double>& x, double low, double high, double rate) {
  const double f0 = std::sqrt(low * high);
  const double w0 = 2.0 * std::numbers::pi * f0 / rate;
  const double octaves = std::log2(high / low);
  const double alpha = std::sin(w0) * std::sinh(std::numbers::ln2 / 2.0 * octaves * w0 / std::sin(w0));
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  for (int pass = 0; pass < 2; ++pass) {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
      const double y = b0 * v + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }
}

}  // namespace

std::vector<double> synthesize_segment(const SyntheticSpec& spec, std::size_t label, Split split,
                                       std::size_t index) {
  if (label >= spec.classes.size()) throw ConfigError("synthetic label out of range");
  std::mt19937_64 rng(mix(mix(mix(spec.seed) ^ label) ^ (static_cast<std::uint64_t>(split) << 32 | index)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::normal_distribution<double> gauss(0.0, 1.0);

  const ClassSignature& sig = spec.classes[label];
  const std::size_t n = spec.samples_per_segment;
  const double rate = spec.sample_rate;
  const double two_pi = 2.0 * std::numbers::pi;

  std::vector<double> noise(n);
  for (double& v : noise) v = gauss(rng);
  band_pass(noise, sig.noise_low_hz, sig.noise_high_hz, rate);
  const double noise_gain = uniform(0.02, 0.08);

  struct Tone {
    double freq, amp, phase;
  };
  std::vector<Tone> tones;
  for (double f : sig.tones_hz) tones.push_back({f * uniform(0.98, 1.02), uniform(0.05, 0.2), uniform(0, two_pi)});
  std::vector<Tone> distractors;
  if (unit(rng) < 0.3) {
    const std::size_t other = (label + 1 + static_cast<std::size_t>(rng() % (spec.classes.size() - 1))) %
                              spec.classes.size();
    for (double f : spec.classes[other].tones_hz) distractors.push_back({f, uniform(0.01, 0.04), uniform(0, two_pi)});
  }
  const double depth = uniform(0.3, 0.8);
  const double am_phase = uniform(0, two_pi);
  const double background = uniform(0.005, 0.03);

  std::vector<double> out(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    double s = noise_gain * noise[i];
    for (const Tone& tone : tones) s += tone.amp * std::sin(two_pi * tone.freq * t + tone.phase);
    const double env = 1.0 - depth * (0.5 + 0.5 * std::cos(two_pi * sig.am_rate_hz * t + am_phase));
    double v = env * s + background * gauss(rng);
    for (const Tone& tone : distractors) v += tone.amp * std::sin(two_pi * tone.freq * t + tone.phase);
    out[i] = v;
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 0.9) {
    for (double& v : out) v *= 0.9 / peak;
  }
  return out;
}

DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  DatasetManifest manifest;
  manifest.root = out_dir;
  std::vector<std::size_t> indices;
  for (Split split : kSplits) {
    std::filesystem::create_directories(out_dir / "audio" / std::string(to_string(split)));
    for (std::size_t k = 0; k < spec.classes.size(); ++k) {
      for (std::size_t i = 0; i < spec.per_class(split); ++i) {
        char name[96];
        std::snprintf(name, sizeof(name), "audio/%s/%s_%04zu.wav", std::string(to_string(split)).c_str(),
                      class_names()[k].c_str(), i);
        manifest.rows.push_back({name, k, split});
        indices.push_back(i);
      }
    }
  }
  parallel_for(manifest.rows.size(), [&](std::size_t r) {
    const ManifestRow& row = manifest.rows[r];
    write_wav_pcm16(manifest.resolve(row), synthesize_segment(spec, row.label, row.split, indices[r]),
                    spec.sample_rate);
  });
  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

}  // namespace dacnet
