#include "tssd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace tssd {

std::string system_id(SpoofArtifact artifact) {
  switch (artifact) {
    case SpoofArtifact::clipping: return "A01";
    case SpoofArtifact::requantization: return "A02";
    case SpoofArtifact::lowpass: return "A03";
  }
  return "A00";
}

std::vector<float> synth_bonafide(std::mt19937_64& rng, std::size_t length) {
  std::uniform_real_distribution<double> f0_dist(80.0, 300.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 2 * std::numbers::pi);
  std::uniform_real_distribution<double> env_rate(0.5, 3.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const double f0 = f0_dist(rng);
  double phase[6];
  for (double& p : phase) p = phase_dist(rng);
  const double rate = env_rate(rng);
  const double env_phase = phase_dist(rng);

  std::vector<double> x(length);
  double power = 0;
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    double s = 0;
    for (int k = 1; k <= 6; ++k) s += std::sin(2 * std::numbers::pi * k * f0 * t + phase[k - 1]) / k;
    s *= 0.6 + 0.4 * std::sin(2 * std::numbers::pi * rate * t + env_phase);
    x[i] = s;
    power += s * s;
  }
  const double noise_rms = std::sqrt(power / static_cast<double>(length)) / 10.0;  // 20 dB
  double peak = 0;
  for (double& s : x) {
    s += noise_rms * noise(rng);
    peak = std::max(peak, std::abs(s));
  }
  const double gain = peak > 0 ? kSynthPeak / peak : 0.0;
  std::vector<float> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = static_cast<float>(x[i] * gain);
  return out;
}

void apply_artifact(std::vector<float>& samples, SpoofArtifact artifact) {
  switch (artifact) {
    case SpoofArtifact::clipping: {
      float peak = 0;
      for (float s : samples) peak = std::max(peak, std::abs(s));
      const float limit = 0.6f * peak;
      for (float& s : samples) s = std::clamp(s, -limit, limit);
      break;
    }
    case SpoofArtifact::requantization:
      for (float& s : samples) s = std::clamp(std::round(s * 8.0f) / 8.0f, -1.0f, 0.875f);
      break;
    case SpoofArtifact::lowpass: {
      std::vector<float> out(samples.size());
      double acc = 0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        acc += samples[i];
        if (i >= 8) acc -= samples[i - 8];
        out[i] = static_cast<float>(acc / 8.0);
      }
      samples = std::move(out);
      break;
    }
  }
}

std::vector<ProtocolEntry> synth_dataset(int n_per_class, std::uint64_t seed, const std::filesystem::path& out_dir,
                                         const SynthOptions& options) {
  if (n_per_class < 1) throw std::invalid_argument("synth_dataset: n must be at least 1");
  if (!(options.min_seconds > 0) || options.max_seconds < options.min_seconds) {
    throw std::invalid_argument("synth_dataset: bad duration range");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wav", ec);
  if (ec) throw std::runtime_error("synth_dataset: cannot create " + (out_dir / "wav").string() + ": " + ec.message());

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> seconds(options.min_seconds, options.max_seconds);
  std::uniform_int_distribution<int> speaker(0, 19);
  std::uniform_int_distribution<int> artifact_pick(0, 2);

  std::vector<ProtocolEntry> entries;
  for (int i = 0; i < 2 * n_per_class; ++i) {
    const bool bona = i < n_per_class;
    char id[64], spk[64];
    std::snprintf(id, sizeof(id), "%s_%06d", options.prefix.c_str(), i + 1);
    std::snprintf(spk, sizeof(spk), "%s_S%02d", options.prefix.c_str(), speaker(rng));
    const auto length = static_cast<std::size_t>(std::lround(seconds(rng) * kSampleRate));
    auto samples = synth_bonafide(rng, length);
    ProtocolEntry entry{spk, id, "-", bona ? Label::bonafide : Label::spoof};
    if (!bona) {
      const auto artifact = static_cast<SpoofArtifact>(artifact_pick(rng));
      apply_artifact(samples, artifact);
      entry.system_id = system_id(artifact);
    }
    write_wav(audio_path(out_dir, id), samples);
    entries.push_back(std::move(entry));
  }

  std::ofstream protocol(out_dir / "protocol.txt", std::ios::trunc);
  if (!protocol) throw std::runtime_error("synth_dataset: cannot write " + (out_dir / "protocol.txt").string());
  for (const auto& e : entries) protocol << format_protocol_line(e) << '\n';
  if (!protocol) throw std::runtime_error("synth_dataset: failed writing protocol");
  return entries;
}

}  // namespace tssd
