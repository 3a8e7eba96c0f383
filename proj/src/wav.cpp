#include "dacnet/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "dacnet/binary_io.hpp"
#include "dacnet/errors.hpp"

namespace dacnet {

namespace {
constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;
}  // namespace

WavAudio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file " + path.string());
  const auto fail = [&](const std::string& why) { return DataError(path.string() + ": " + why); };

  char riff[4], wave[4];
  std::uint32_t riff_size = 0;
  if (!in.read(riff, 4) || !io::read_le(in, riff_size) || !in.read(wave, 4) ||
      std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<char> data;
  while (true) {
    char id[4];
    std::uint32_t size = 0;
    if (!in.read(id, 4) || !io::read_le(in, size)) break;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      std::vector<char> fmt(size);
      if (size < 16 || !in.read(fmt.data(), size)) throw fail("truncated fmt chunk");
      std::memcpy(&format, fmt.data(), 2);
      std::memcpy(&channels, fmt.data() + 2, 2);
      std::memcpy(&rate, fmt.data() + 4, 4);
      std::memcpy(&bits, fmt.data() + 14, 2);
      if (format == kFormatExtensible) {
        if (size < 26) throw fail("truncated extensible fmt chunk");
        std::memcpy(&format, fmt.data() + 24, 2);  // first two bytes of the sub-format GUID
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data.resize(size);
      in.read(data.data(), size);
      data.resize(static_cast<std::size_t>(in.gcount()));
      break;
    } else {
      in.seekg(size + (size & 1u), std::ios::cur);
    }
    if (size & 1u) in.seekg(1, std::ios::cur);
  }
  if (!have_fmt) throw fail("missing fmt chunk");
  if (channels == 0) throw fail("zero channels");

  WavAudio audio;
  audio.sample_rate = rate;
  audio.channels = channels;
  if (format == kFormatPcm && bits == 16) {
    const std::size_t frames = data.size() / (2u * channels);
    audio.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
      std::int16_t v;
      std::memcpy(&v, data.data() + i * 2u * channels, 2);
      audio.samples[i] = v / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t frames = data.size() / (4u * channels);
    audio.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
      float v;
      std::memcpy(&v, data.data() + i * 4u * channels, 4);
      audio.samples[i] = v;
    }
  } else {
    throw fail("unsupported sample format " + std::to_string(format) + " / " +
               std::to_string(bits) + " bits");
  }
  return audio;
}

void write_wav_pcm16(const std::filesystem::path& path, std::span<const double> samples,
                     unsigned sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write WAV file " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  io::write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  io::write_le<std::uint32_t>(out, 16);
  io::write_le<std::uint16_t>(out, kFormatPcm);
  io::write_le<std::uint16_t>(out, 1);
  io::write_le<std::uint32_t>(out, sample_rate);
  io::write_le<std::uint32_t>(out, sample_rate * 2);
  io::write_le<std::uint16_t>(out, 2);
  io::write_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  io::write_le<std::uint32_t>(out, data_bytes);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    io::write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32767.0)));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace dacnet
