#pragma once

#include "tssd/adam.hpp"
#include "tssd/model.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

namespace tssd {

/// Raised for malformed, truncated or foreign checkpoint files.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model<float> model;
  std::optional<AdamState<float>> optimizer;
};

// Layout, little-endian throughout:
//   "TSSD" | u32 version | u32 len + model config text
//   | u32 len + optimizer text (empty when absent)
//   | u32 count | count x (u32 len + name | u32 rank | u64 dims[rank] | f32 data)
// Arrays are named <layer>.weight/.bias/.running_mean/.running_var, and
// adam.m:<tensor>/adam.v:<tensor> for the optimizer moments.
std::string serialize_checkpoint(const Model<float>& model, const AdamState<float>* optimizer = nullptr);
Checkpoint deserialize_checkpoint(const std::string& bytes);

/// Writes through a temporary file and renames, so readers never see a
/// partial checkpoint.
void save_checkpoint(const Model<float>& model, const AdamState<float>* optimizer,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tssd
