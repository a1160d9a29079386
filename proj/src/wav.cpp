#include "tssd/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace tssd {

namespace {

std::uint32_t le32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

std::vector<float> decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw WavError("wav: not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) throw WavError("wav: truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      const auto format = le16(f);
      const auto channels = le16(f + 2);
      const auto rate = le32(f + 4);
      const auto bits = le16(f + 14);
      if (format != 1 || bits != 16) throw WavError("wav: unsupported encoding (need 16-bit PCM)");
      if (channels != 1) throw WavError("wav: unsupported channel count " + std::to_string(channels) + " (need mono)");
      if (rate != kSampleRate) throw WavError("wav: unsupported sample rate " + std::to_string(rate) + " (need 16000)");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw WavError("wav: data chunk before fmt chunk");
      if (body + size > bytes.size()) throw WavError("wav: truncated data chunk");
      if (size % 2 != 0) throw WavError("wav: data chunk has a partial sample");
      std::vector<float> samples(size / 2);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i] = static_cast<float>(static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i))) / 32768.0f;
      }
      return samples;
    }
    pos = body + size + (size & 1u);
  }
  throw WavError(have_fmt ? "wav: missing data chunk" : "wav: missing fmt chunk");
}

std::vector<float> read_wav_samples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("wav: cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const WavError& e) {
    throw WavError(std::string(e.what()) + " [" + path.string() + "]");
  }
}

std::vector<std::uint8_t> encode_wav(std::span<const float> samples) {
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, kSampleRate);
  put32(out, kSampleRate * 2);
  put16(out, 2);
  put16(out, 16);
  put_tag(out, "data");
  put32(out, data_bytes);
  for (float s : samples) {
    const long q = std::lround(static_cast<double>(s) * 32768.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L))));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, std::span<const float> samples) {
  const auto bytes = encode_wav(samples);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WavError("wav: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WavError("wav: failed writing " + path.string());
}

}  // namespace tssd
