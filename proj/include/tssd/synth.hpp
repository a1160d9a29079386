#pragma once

#include "tssd/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace tssd {

/// Post-processing that turns a clean synthetic utterance into a spoof.
enum class SpoofArtifact { clipping, requantization, lowpass };

/// Protocol system id for an artifact: A01, A02, A03.
std::string system_id(SpoofArtifact artifact);

/// Peak magnitude of every generated bona fide utterance.
inline constexpr double kSynthPeak = 0.9;

struct SynthOptions {
  double min_seconds = 1.0;
  double max_seconds = 8.0;
  /// Prefix for utterance and speaker ids, so corpora can be combined.
  std::string prefix = "SYN";
};

/// Harmonic tone stack: f0 ~ U[80, 300] Hz, six harmonics at 1/k amplitude,
/// a slow random amplitude envelope, white noise at 20 dB SNR, peak-normalised
/// to `kSynthPeak`.
std::vector<float> synth_bonafide(std::mt19937_64& rng, std::size_t length);

/// Applies an artifact in place: hard clipping at 0.6 of the peak, 4-bit
/// uniform re-quantization, or an 8-tap moving average.
void apply_artifact(std::vector<float>& samples, SpoofArtifact artifact);

/// Writes `2 * n_per_class` utterances under `<out_dir>/wav/` and their
/// protocol to `<out_dir>/protocol.txt`. Deterministic in `seed`.
std::vector<ProtocolEntry> synth_dataset(int n_per_class, std::uint64_t seed, const std::filesystem::path& out_dir,
                                         const SynthOptions& options = {});

}  // namespace tssd
