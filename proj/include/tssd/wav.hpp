#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tssd {

inline constexpr int kSampleRate = 16000;

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads a RIFF/WAVE file holding 16-bit PCM, mono, 16 kHz. Samples are
/// scaled by 1/32768 into [-1, 1). Unknown chunks are skipped.
std::vector<float> read_wav_samples(const std::filesystem::path& path);
std::vector<float> decode_wav(std::span<const std::uint8_t> bytes);

/// Writes 16-bit PCM mono 16 kHz; samples are rounded to the nearest step of
/// 1/32768 and clamped to [-1, 32767/32768].
void write_wav(const std::filesystem::path& path, std::span<const float> samples);
std::vector<std::uint8_t> encode_wav(std::span<const float> samples);

}  // namespace tssd
