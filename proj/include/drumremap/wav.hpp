#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace drumremap {

struct AudioBuffer {
  double sample_rate = 48000.0;
  std::vector<double> samples;  // mono
};

/// Reads PCM 16/24-bit or IEEE float 32-bit RIFF/WAVE files. Multi-channel
/// input is averaged down to mono. Throws DataError on malformed files.
AudioBuffer read_wav(const std::filesystem::path& path);

/// Writes mono IEEE float 32-bit.
void write_wav(const std::filesystem::path& path, std::span<const double> samples, double sample_rate);

/// Writes mono 16-bit PCM with clipping to [-1, 1].
void write_wav_pcm16(const std::filesystem::path& path, std::span<const double> samples, double sample_rate);

}  // namespace drumremap
