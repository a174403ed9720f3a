#include "drumremap/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "drumremap/errors.hpp"

namespace drumremap {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void write_file(const std::filesystem::path& path, std::uint16_t format, std::uint16_t bits,
                const std::string& data, double sample_rate) {
  const auto rate = static_cast<std::uint32_t>(std::lround(sample_rate));
  const std::uint16_t block_align = bits / 8;
  std::string out;
  out.reserve(44 + data.size());
  out += "RIFF";
  put_u32(out, static_cast<std::uint32_t>(36 + data.size()));
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * block_align);
  put_u16(out, block_align);
  put_u16(out, bits);
  out += "data";
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  out += data;
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw DataError("failed writing " + path.string());
}

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& why) { return DataError(path.string() + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Tolerate a data chunk whose declared size overruns a truncated file.
      if (std::memcmp(chunk, "data", 4) != 0) throw fail("truncated chunk");
    }
    const std::size_t available = std::min(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (available < 16) throw fail("short fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible && available >= 26) format = read_u16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = available;
    }
    pos = body + size + (size & 1);
  }
  if (channels == 0 || rate == 0) throw fail("missing fmt chunk");
  if (data == nullptr) throw fail("missing data chunk");

  const bool pcm = format == kFormatPcm && (bits == 16 || bits == 24 || bits == 32);
  const bool flt = format == kFormatFloat && bits == 32;
  if (!pcm && !flt) {
    throw fail("unsupported sample format " + std::to_string(format) + "/" + std::to_string(bits) + " bit");
  }
  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frames = data_size / (bytes_per_sample * channels);

  AudioBuffer out;
  out.sample_rate = rate;
  out.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (f * channels + c) * bytes_per_sample;
      double v = 0.0;
      if (flt) {
        float x;
        std::uint32_t u = read_u32(p);
        std::memcpy(&x, &u, sizeof x);
        v = x;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
        if (s & 0x800000) s -= 0x1000000;
        v = s / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
      }
      acc += v;
    }
    out.samples[f] = acc / channels;
  }
  return out;
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples, double sample_rate) {
  std::string data;
  data.reserve(samples.size() * 4);
  for (double s : samples) {
    const float x = static_cast<float>(s);
    std::uint32_t u;
    std::memcpy(&u, &x, sizeof u);
    put_u32(data, u);
  }
  write_file(path, kFormatFloat, 32, data, sample_rate);
}

void write_wav_pcm16(const std::filesystem::path& path, std::span<const double> samples, double sample_rate) {
  std::string data;
  data.reserve(samples.size() * 2);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    put_u16(data, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  write_file(path, kFormatPcm, 16, data, sample_rate);
}

}  // namespace drumremap
