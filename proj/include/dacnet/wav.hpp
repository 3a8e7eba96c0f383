#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace dacnet {

struct WavAudio {
  unsigned sample_rate = 0;
  unsigned channels = 0;
  std::vector<double> samples;  // first channel, scaled to [-1, 1]
};

/// Reads RIFF/WAVE files holding 16-bit PCM or 32-bit IEEE float data
/// (plain or WAVE_FORMAT_EXTENSIBLE). Only channel 0 is kept.
WavAudio read_wav(const std::filesystem::path& path);

/// Writes mono 16-bit PCM; samples are clipped to [-1, 1].
void write_wav_pcm16(const std::filesystem::path& path, std::span<const double> samples,
                     unsigned sample_rate);

}  // namespace dacnet
