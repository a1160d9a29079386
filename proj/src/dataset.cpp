#include "tssd/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tssd {

Utterance read_wav(const std::filesystem::path& path, Label label) {
  return Utterance{path.stem().string(), read_wav_samples(path), label};
}

std::vector<float> align_duration(std::span<const float> samples, Index target) {
  if (samples.empty()) throw std::invalid_argument("align_duration: empty signal");
  if (target < 1) throw std::invalid_argument("align_duration: target length must be positive");
  std::vector<float> out(static_cast<std::size_t>(target));
  const std::size_t n = samples.size();
  for (std::size_t i = 0; i < out.size(); i += n) {
    const std::size_t take = std::min(n, out.size() - i);
    std::copy_n(samples.begin(), take, out.begin() + static_cast<std::ptrdiff_t>(i));
  }
  return out;
}

std::vector<ProtocolEntry> parse_protocol_text(const std::string& text) {
  std::vector<ProtocolEntry> entries;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<std::string> f{std::istream_iterator<std::string>(fields), std::istream_iterator<std::string>()};
    if (f.empty()) continue;
    auto fail = [&](const std::string& why) {
      throw std::invalid_argument("protocol line " + std::to_string(line_no) + ": " + why + ": '" + line + "'");
    };
    if (f.size() == 1) {
      entries.push_back({"-", f[0], "-", Label::unknown});
      continue;
    }
    if (f.size() != 5) fail("expected 5 fields, found " + std::to_string(f.size()));
    Label key = Label::unknown;
    if (f[4] == "bonafide") {
      key = Label::bonafide;
    } else if (f[4] == "spoof") {
      key = Label::spoof;
    } else {
      fail("unknown key '" + f[4] + "'");
    }
    entries.push_back({f[0], f[1], f[3], key});
  }
  return entries;
}

std::vector<ProtocolEntry> parse_protocol(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open protocol " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_protocol_text(text);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string format_protocol_line(const ProtocolEntry& e) {
  return e.speaker_id + ' ' + e.utterance_id + " - " + e.system_id + ' ' + std::string(to_string(e.key));
}

std::unordered_map<std::string, Label> label_map(const std::vector<ProtocolEntry>& entries) {
  std::unordered_map<std::string, Label> out;
  for (const auto& e : entries) {
    if (!out.emplace(e.utterance_id, e.key).second) {
      throw std::invalid_argument("protocol: duplicate utterance id '" + e.utterance_id + "'");
    }
  }
  return out;
}

std::filesystem::path audio_path(const std::filesystem::path& root, const std::string& utterance_id) {
  return root / "wav" / (utterance_id + ".wav");
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return batches;
}

BatchStream::BatchStream(std::vector<ProtocolEntry> entries, std::filesystem::path audio_root, std::size_t batch_size,
                         std::uint64_t seed, Index input_length)
    : entries_(std::move(entries)),
      root_(std::move(audio_root)),
      length_(input_length),
      order_(shuffled_batches(entries_.size(), batch_size, seed)) {}

std::optional<Batch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const auto& rows = order_[cursor_++];
  Batch batch{TensorF({static_cast<Index>(rows.size()), 1, length_}), {}, {}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& e = entries_[rows[i]];
    const auto aligned = align_duration(read_wav_samples(audio_path(root_, e.utterance_id)), length_);
    std::copy(aligned.begin(), aligned.end(), batch.input.data() + static_cast<Index>(i) * length_);
    batch.labels.push_back(class_index(e.key));
    batch.ids.push_back(e.utterance_id);
  }
  return batch;
}

BatchStream make_batches(std::vector<ProtocolEntry> entries, const std::filesystem::path& audio_root,
                         std::size_t batch_size, std::uint64_t seed, Index input_length) {
  for (const auto& e : entries) {
    const auto path = audio_path(audio_root, e.utterance_id);
    if (!std::filesystem::exists(path)) throw std::runtime_error("missing audio file " + path.string());
  }
  return BatchStream(std::move(entries), audio_root, batch_size, seed, input_length);
}

TensorF Dataset::batch(std::span<const std::size_t> rows) const {
  TensorF out({static_cast<Index>(rows.size()), 1, length});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(rows[i] * static_cast<std::size_t>(length)), length,
                out.data() + static_cast<Index>(i) * length);
  }
  return out;
}

std::vector<int> Dataset::labels_of(std::span<const std::size_t> rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

std::pair<std::int64_t, std::int64_t> Dataset::label_counts() const {
  const auto spoof = std::count(labels.begin(), labels.end(), class_index(Label::spoof));
  const auto bona = std::count(labels.begin(), labels.end(), class_index(Label::bonafide));
  return {spoof, bona};
}

Dataset load_dataset(const std::vector<ProtocolEntry>& entries, const std::filesystem::path& audio_root,
                     Index input_length) {
  Dataset d;
  d.length = input_length;
  d.samples.reserve(entries.size() * static_cast<std::size_t>(input_length));
  for (const auto& e : entries) {
    const auto path = audio_path(audio_root, e.utterance_id);
    if (!std::filesystem::exists(path)) throw std::runtime_error("missing audio file " + path.string());
    const auto aligned = align_duration(read_wav_samples(path), input_length);
    d.samples.insert(d.samples.end(), aligned.begin(), aligned.end());
    d.ids.push_back(e.utterance_id);
    d.labels.push_back(class_index(e.key));
  }
  return d;
}

}  // namespace tssd
