#pragma once

#include "tssd/labels.hpp"
#include "tssd/tensor.hpp"
#include "tssd/wav.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace tssd {

/// Six seconds at 16 kHz.
inline constexpr Index kDefaultInputLength = 96000;

struct Utterance {
  std::string id;
  std::vector<float> samples;
  Label label = Label::unknown;
};

/// Loads a WAV file; the utterance id is the file stem.
Utterance read_wav(const std::filesystem::path& path, Label label = Label::unknown);

/// Fixes the duration: longer signals keep their first `target` samples,
/// shorter ones are tiled end to end and cut at `target`.
std::vector<float> align_duration(std::span<const float> samples, Index target = kDefaultInputLength);

/// One line of an ASVspoof-style countermeasure protocol:
/// `SPEAKER UTT_ID - SYSTEM_ID KEY`.
struct ProtocolEntry {
  std::string speaker_id;
  std::string utterance_id;
  std::string system_id;
  Label key = Label::unknown;

  friend bool operator==(const ProtocolEntry&, const ProtocolEntry&) = default;
};

/// Parses protocol lines. Blank lines are skipped. A line holding only an
/// utterance id is accepted as an unlabeled entry (for scoring lists).
/// Errors name the offending line.
std::vector<ProtocolEntry> parse_protocol(const std::filesystem::path& path);
std::vector<ProtocolEntry> parse_protocol_text(const std::string& text);
std::string format_protocol_line(const ProtocolEntry& entry);

/// Throws if an utterance id appears twice.
std::unordered_map<std::string, Label> label_map(const std::vector<ProtocolEntry>& entries);

/// `<root>/wav/<utt_id>.wav`.
std::filesystem::path audio_path(const std::filesystem::path& root, const std::string& utterance_id);

/// A seeded permutation of [0, n) cut into consecutive batches; the last
/// batch keeps whatever remains.
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed);

struct Batch {
  TensorF input;  // B x 1 x L
  std::vector<int> labels;  // class index, -1 when unknown
  std::vector<std::string> ids;
};

/// Streams aligned batches from disk in a seeded order.
class BatchStream {
 public:
  BatchStream(std::vector<ProtocolEntry> entries, std::filesystem::path audio_root, std::size_t batch_size,
              std::uint64_t seed, Index input_length = kDefaultInputLength);

  std::optional<Batch> next();
  std::size_t batch_count() const { return order_.size(); }

 private:
  std::vector<ProtocolEntry> entries_;
  std::filesystem::path root_;
  Index length_;
  std::vector<std::vector<std::size_t>> order_;
  std::size_t cursor_ = 0;
};

/// Checks that every referenced file exists before returning the stream.
BatchStream make_batches(std::vector<ProtocolEntry> entries, const std::filesystem::path& audio_root,
                         std::size_t batch_size, std::uint64_t seed, Index input_length = kDefaultInputLength);

/// Aligned utterances held in memory, one row of `length` samples each.
struct Dataset {
  std::vector<std::string> ids;
  std::vector<int> labels;
  Index length = kDefaultInputLength;
  std::vector<float> samples;

  std::size_t size() const { return ids.size(); }
  /// B x 1 x L tensor of the selected rows.
  TensorF batch(std::span<const std::size_t> rows) const;
  std::vector<int> labels_of(std::span<const std::size_t> rows) const;
  /// {spoof count, bona fide count}.
  std::pair<std::int64_t, std::int64_t> label_counts() const;
};

Dataset load_dataset(const std::vector<ProtocolEntry>& entries, const std::filesystem::path& audio_root,
                     Index input_length = kDefaultInputLength);

}  // namespace tssd
