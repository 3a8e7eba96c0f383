#include "dacnet/frontend.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <vector>

#include "dacnet/binary_io.hpp"
#include "dacnet/errors.hpp"

namespace dacnet {

std::size_t FrontendConfig::frame_samples() const {
  return static_cast<std::size_t>(std::lround(frame_length_ms * sample_rate / 1000.0));
}

std::size_t FrontendConfig::hop_samples() const {
  return static_cast<std::size_t>(std::lround(frame_hop_ms * sample_rate / 1000.0));
}

void FrontendConfig::validate() const {
  if (sample_rate != 16000) {
    throw ConfigError("frontend sample_rate must be 16000 Hz, got " + std::to_string(sample_rate));
  }
  if (frame_samples() == 0 || hop_samples() == 0) throw ConfigError("frame length and hop must be > 0");
  if (hop_samples() > frame_samples()) throw ConfigError("frame_hop must not exceed frame_length");
  if (fft_size < frame_samples()) {
    throw ConfigError("fft_size " + std::to_string(fft_size) + " is shorter than a frame (" +
                      std::to_string(frame_samples()) + " samples)");
  }
  if (mel_bins < 2) throw ConfigError("mel_bins must be >= 2");
  if (delta_window < 1) throw ConfigError("delta_window must be >= 1");
}

std::string FrontendConfig::canonical() const {
  std::ostringstream s;
  s.precision(17);
  s << "dacf-v" << int(kFeatureFileVersion) << ";sr=" << sample_rate << ";frame_ms=" << frame_length_ms
    << ";hop_ms=" << frame_hop_ms << ";mel=" << mel_bins << ";fft=" << fft_size
    << ";delta=" << delta_window << ";channels=" << (channels == InputChannels::deltas ? "deltas" : "replicate")
    << ";window=hann-periodic;mel_scale=htk;floor=1e-10";
  return s.str();
}

std::uint64_t FrontendConfig::fingerprint() const { return io::fnv1a64(canonical()); }

std::size_t frame_count(std::size_t samples, const FrontendConfig& config) {
  const std::size_t frame = config.frame_samples();
  if (samples < frame) {
    throw DataError("audio of " + std::to_string(samples) + " samples is shorter than one frame (" +
                    std::to_string(frame) + ")");
  }
  return (samples - frame) / config.hop_samples() + 1;
}

namespace {
std::mutex g_fftw_planner;  // FFTW planning is not thread-safe; execution is.
}

Tensor stft_power(std::span<const double> audio, const FrontendConfig& config) {
  config.validate();
  const std::size_t frames = frame_count(audio.size(), config);
  const std::size_t frame = config.frame_samples(), hop = config.hop_samples();
  const std::size_t nfft = config.fft_size, bins = nfft / 2 + 1;

  std::vector<double> window(frame);
  for (std::size_t i = 0; i < frame; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / frame);
  }

  double* in = fftw_alloc_real(nfft);
  fftw_complex* out = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(g_fftw_planner);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(nfft), in, out, FFTW_ESTIMATE);
  }
  Tensor power(Shape{bins, frames});
  for (std::size_t f = 0; f < frames; ++f) {
    const double* src = audio.data() + f * hop;
    for (std::size_t i = 0; i < frame; ++i) in[i] = src[i] * window[i];
    std::fill(in + frame, in + nfft, 0.0);
    fftw_execute(plan);
    for (std::size_t k = 0; k < bins; ++k) {
      power[k * frames + f] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    }
  }
  {
    std::lock_guard lock(g_fftw_planner);
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return power;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {
// Band edge j of mel_bins + 2 equally spaced mel points between 0 and Nyquist.
double band_edge_hz(const FrontendConfig& config, std::size_t j) {
  const double top = hz_to_mel(config.sample_rate / 2.0);
  return mel_to_hz(top * static_cast<double>(j) / static_cast<double>(config.mel_bins + 1));
}
}  // namespace

double mel_band_center_hz(const FrontendConfig& config, std::size_t band) {
  return band_edge_hz(config, band + 1);
}

double mel_band_weight(const FrontendConfig& config, std::size_t band, double hz) {
  const double lo = band_edge_hz(config, band);
  const double center = band_edge_hz(config, band + 1);
  const double hi = band_edge_hz(config, band + 2);
  if (hz <= lo || hz >= hi) return 0.0;
  if (hz <= center) return (hz - lo) / (center - lo);
  return (hi - hz) / (hi - center);
}

Tensor mel_filterbank(const FrontendConfig& config) {
  config.validate();
  const std::size_t bins = config.fft_size / 2 + 1;
  Tensor fb(Shape{config.mel_bins, bins});
  for (std::size_t m = 0; m < config.mel_bins; ++m) {
    for (std::size_t k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * config.sample_rate / static_cast<double>(config.fft_size);
      fb[m * bins + k] = mel_band_weight(config, m, hz);
    }
  }
  return fb;
}

Tensor mel_project_log(const Tensor& power, const FrontendConfig& config) {
  const std::size_t bins = config.fft_size / 2 + 1;
  if (power.rank() != 2 || power.dim(0) != bins) {
    throw ShapeError("power spectrogram must be [" + std::to_string(bins) + ", frames], got " +
                     shape_string(power.shape()));
  }
  const Tensor fb = mel_filterbank(config);
  const std::size_t frames = power.dim(1);
  Tensor out(Shape{config.mel_bins, frames});
  for (std::size_t m = 0; m < config.mel_bins; ++m) {
    const double* w = fb.data() + m * bins;
    std::size_t first = 0, last = bins;
    while (first < bins && w[first] == 0.0) ++first;
    while (last > first && w[last - 1] == 0.0) --last;
    double* row = out.data() + m * frames;
    for (std::size_t k = first; k < last; ++k) {
      const double* p = power.data() + k * frames;
      for (std::size_t f = 0; f < frames; ++f) row[f] += w[k] * p[f];
    }
    for (std::size_t f = 0; f < frames; ++f) row[f] = std::log(std::max(row[f], kLogFloor));
  }
  return out;
}

Tensor delta(const Tensor& features, std::size_t window) {
  if (features.rank() != 2) throw ShapeError("delta expects [bins, frames]");
  if (window < 1) throw ConfigError("delta window must be >= 1");
  const std::size_t rows = features.dim(0), frames = features.dim(1);
  double denom = 0.0;
  for (std::size_t n = 1; n <= window; ++n) denom += static_cast<double>(n * n);
  denom *= 2.0;
  Tensor out(features.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* c = features.data() + r * frames;
    for (std::size_t t = 0; t < frames; ++t) {
      double acc = 0.0;
      for (std::size_t n = 1; n <= window; ++n) {
        const std::size_t ahead = std::min(t + n, frames - 1);
        const std::size_t behind = t >= n ? t - n : 0;
        acc += static_cast<double>(n) * (c[ahead] - c[behind]);
      }
      out[r * frames + t] = acc / denom;
    }
  }
  return out;
}

Tensor add_deltas(const Tensor& static_features, std::size_t window) {
  const Tensor d1 = delta(static_features, window);
  const Tensor d2 = delta(d1, window);
  const Tensor parts[] = {static_features, d1, d2};
  return stack(parts);
}

Tensor extract_features(std::span<const double> audio, const FrontendConfig& config) {
  const Tensor logmel = mel_project_log(stft_power(audio, config), config);
  if (config.channels == InputChannels::replicate) {
    const Tensor parts[] = {logmel, logmel, logmel};
    return stack(parts);
  }
  return add_deltas(logmel, config.delta_window);
}

void write_feature_file(const std::filesystem::path& path, const Tensor& values,
                        std::uint64_t fingerprint) {
  if (values.rank() != 3) throw ShapeError("feature tensor must be rank 3");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write feature file " + path.string());
  out.write("DACF", 4);
  io::write_le<std::uint8_t>(out, kFeatureFileVersion);
  io::write_le<std::uint64_t>(out, fingerprint);
  for (std::size_t i = 0; i < 3; ++i) io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(values.dim(i)));
  for (double v : values.values()) io::write_le<double>(out, v);
  if (!out) throw DataError("write failed for " + path.string());
}

FeatureRecord read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file " + path.string());
  char magic[4];
  std::uint8_t version = 0;
  FeatureRecord rec;
  if (!in.read(magic, 4) || std::memcmp(magic, "DACF", 4) != 0) {
    throw DataError(path.string() + ": bad magic, not a DACF feature file");
  }
  if (!io::read_le(in, version) || version != kFeatureFileVersion) {
    throw DataError(path.string() + ": unsupported feature file version " + std::to_string(version));
  }
  std::uint32_t dims[3];
  if (!io::read_le(in, rec.fingerprint) || !io::read_le(in, dims[0]) || !io::read_le(in, dims[1]) ||
      !io::read_le(in, dims[2])) {
    throw DataError(path.string() + ": truncated header");
  }
  if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0) throw DataError(path.string() + ": zero dimension");
  Tensor values(Shape{dims[0], dims[1], dims[2]});
  if (!in.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(double)))) {
    throw DataError(path.string() + ": truncated payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes");
  rec.values = std::move(values);
  return rec;
}

}  // namespace dacnet
