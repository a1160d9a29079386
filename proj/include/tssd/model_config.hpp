#pragma once

#include "tssd/tensor.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace tssd {

enum class Family { res, inc };

std::string to_string(Family family);
Family parse_family(std::string_view text);

/// Every local pooling layer uses this window (and stride).
inline constexpr Index kPoolWindow = 4;

/// Architecture of a Res-TSSDNet or Inc-TSSDNet.
///
/// Both families share a stem (conv k=stem_kernel -> BN -> ReLU -> pool),
/// `blocks` stacked blocks with a pool between consecutive blocks, global max
/// pooling and a three-layer head ending in two logits.
struct ModelConfig {
  Family family = Family::res;
  int blocks = 4;
  std::vector<int> channels{32, 64, 128, 128};
  /// Parallel dilated branches per Inception-style block.
  int branches = 1;
  std::vector<int> dilations{1};
  /// Residual 1x1 conv + BN on every Res block.
  bool use_skip = true;
  std::array<int, 2> fc{64, 32};
  int stem_channels = 16;
  int stem_kernel = 7;
  Index input_length = 96000;

  /// Res-TSSDNet with the channel plan {32, 64, 128, 128, ...}.
  static ModelConfig res(int blocks, bool use_skip = true);
  /// Inc-TSSDNet with channel plan {8, 16, 32, 32} (or {8, 16, 32, 64, 64}
  /// from five blocks on) and dilations 1, 2, ..., 2^(branches-1).
  static ModelConfig inc(int blocks, int branches);

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Channels entering the global pooling layer.
  int head_inputs() const;

  /// Time length after the input and after every pooling layer; the last
  /// entry is the span the global max pooling reduces.
  std::vector<Index> time_trace() const;

  /// `key = value` lines; round-trips through `parse`.
  std::string to_text() const;
  /// Reads `key = value` lines. Missing keys keep their defaults, unknown
  /// keys are rejected. Dilations default to powers of two when omitted.
  static ModelConfig parse(std::string_view text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::vector<int> parse_int_list(std::string_view text);
std::string format_int_list(const std::vector<int>& values);

}  // namespace tssd
