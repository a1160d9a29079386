#include "doctest.h"
#include "test_util.hpp"

#include "tssd/dataset.hpp"
#include "tssd/synth.hpp"
#include "tssd/wav.hpp"

#include <cmath>
#include <cstring>
#include <set>

using namespace tssd;
using tssd::test::read_file;
using tssd::test::TempDir;

namespace {

void put16(std::vector<std::uint8_t>& b, std::size_t at, std::uint16_t v) {
  b[at] = static_cast<std::uint8_t>(v & 0xff);
  b[at + 1] = static_cast<std::uint8_t>(v >> 8);
}

void put32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + std::size_t(i)] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::vector<float> ramp(std::size_t n) {
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<float>(i);
  return x;
}

}  // namespace

TEST_CASE("wav encoding basics") {
  const auto bytes = encode_wav(std::vector<float>(16000, 0.0f));
  CHECK(bytes.size() == 44 + 32000);
  CHECK(std::memcmp(bytes.data(), "RIFF", 4) == 0);
  const auto decoded = decode_wav(bytes);
  CHECK(decoded.size() == 16000);
  CHECK(std::all_of(decoded.begin(), decoded.end(), [](float s) { return s == 0.0f; }));

  auto half = encode_wav(std::vector<float>{0.0f});
  put16(half, 44, 16384);
  CHECK(decode_wav(half)[0] == 0.5f);
  put16(half, 44, 0x8000);
  CHECK(decode_wav(half)[0] == -1.0f);

  const auto clipped = decode_wav(encode_wav(std::vector<float>{2.0f, -2.0f, 1.0f}));
  CHECK(clipped[0] == 32767.0f / 32768.0f);
  CHECK(clipped[1] == -1.0f);
}

TEST_CASE("wav round trip stays within one quantization step") {
  std::mt19937_64 rng(1);
  const auto x = synth_bonafide(rng, 12345);
  TempDir dir("wav");
  write_wav(dir / "a.wav", x);
  const auto y = read_wav_samples(dir / "a.wav");
  REQUIRE(y.size() == x.size());
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(double(x[i]) - y[i]));
  CHECK(worst <= 1.0 / 32768);
  write_wav(dir / "b.wav", y);
  CHECK(read_wav_samples(dir / "b.wav") == y);
}

TEST_CASE("wav rejects unsupported or broken files") {
  const auto good = encode_wav(std::vector<float>(10, 0.1f));
  auto stereo = good;
  put16(stereo, 22, 2);
  CHECK_THROWS_WITH_AS(decode_wav(stereo), doctest::Contains("unsupported channel count"), WavError);
  auto rate = good;
  put32(rate, 24, 44100);
  CHECK_THROWS_AS(decode_wav(rate), WavError);
  auto bits = good;
  put16(bits, 34, 8);
  CHECK_THROWS_AS(decode_wav(bits), WavError);
  auto truncated = good;
  truncated.resize(good.size() - 4);
  CHECK_THROWS_AS(decode_wav(truncated), WavError);
  CHECK_THROWS_AS(decode_wav(std::vector<std::uint8_t>(8, 0)), WavError);
  CHECK_THROWS_AS(read_wav_samples("/nonexistent/file.wav"), WavError);
}

TEST_CASE("wav skips unknown chunks") {
  auto bytes = encode_wav(std::vector<float>{0.25f, -0.25f});
  std::vector<std::uint8_t> extra{'L', 'I', 'S', 'T', 2, 0, 0, 0, 'a', 'b'};
  bytes.insert(bytes.begin() + 36, extra.begin(), extra.end());
  put32(bytes, 4, static_cast<std::uint32_t>(bytes.size() - 8));
  CHECK(decode_wav(bytes) == std::vector<float>{0.25f, -0.25f});
}

TEST_CASE("align_duration") {
  const auto exact = ramp(96000);
  CHECK(align_duration(exact) == exact);
  const auto longer = ramp(100000);
  const auto cut = align_duration(longer);
  CHECK(cut.size() == 96000);
  CHECK(std::equal(cut.begin(), cut.end(), longer.begin()));

  const auto shorter = ramp(40000);
  const auto tiled = align_duration(shorter);
  REQUIRE(tiled.size() == 96000);
  CHECK(std::equal(shorter.begin(), shorter.end(), tiled.begin()));
  CHECK(std::equal(shorter.begin(), shorter.end(), tiled.begin() + 40000));
  CHECK(std::equal(shorter.begin(), shorter.begin() + 16000, tiled.begin() + 80000));

  for (std::size_t n : {1, 7, 999, 16000, 95999, 96001}) {
    const auto once = align_duration(ramp(n));
    CHECK(align_duration(once) == once);
  }
  CHECK(align_duration(ramp(5), 12) == std::vector<float>{0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 0, 1});
  CHECK_THROWS(align_duration(std::vector<float>{}));
}

TEST_CASE("protocol parsing") {
  const auto entries = parse_protocol_text(
      "LA_0079 LA_T_1138215 - - bonafide\n"
      "\n"
      "LA_0079 LA_T_1271820 - A01 spoof\n"
      "LA_T_9999999\n");
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].speaker_id == "LA_0079");
  CHECK(entries[0].utterance_id == "LA_T_1138215");
  CHECK(entries[0].key == Label::bonafide);
  CHECK(entries[1].system_id == "A01");
  CHECK(entries[1].key == Label::spoof);
  CHECK(entries[2].utterance_id == "LA_T_9999999");
  CHECK(entries[2].key == Label::unknown);
  CHECK(format_protocol_line(entries[1]) == "LA_0079 LA_T_1271820 - A01 spoof");
  CHECK(parse_protocol_text(format_protocol_line(entries[0]))[0] == entries[0]);

  CHECK_THROWS_WITH(parse_protocol_text("a b\nLA_0079 LA_T_1 - A01\n"), doctest::Contains("line 1"));
  CHECK_THROWS_WITH(parse_protocol_text("LA_0079 LA_T_1 - - bonafide\nLA_0079 LA_T_2 - A01\n"),
                    doctest::Contains("line 2"));
  CHECK_THROWS_WITH(parse_protocol_text("S U - A01 fake\n"), doctest::Contains("line 1"));
  CHECK_THROWS(label_map(parse_protocol_text("S U - - bonafide\nS U - A01 spoof\n")));
  CHECK(label_map(entries).at("LA_T_1271820") == Label::spoof);
  CHECK(audio_path("/data", "X_1") == std::filesystem::path("/data/wav/X_1.wav"));
}

TEST_CASE("shuffled batches") {
  const auto b = shuffled_batches(70, 32, 1);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 32);
  CHECK(b[1].size() == 32);
  CHECK(b[2].size() == 6);
  std::vector<std::size_t> all;
  for (const auto& batch : b) all.insert(all.end(), batch.begin(), batch.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 70; ++i) CHECK(all[i] == i);
  CHECK(shuffled_batches(70, 32, 1) == b);
  CHECK(shuffled_batches(70, 32, 2) != b);
  CHECK_THROWS(shuffled_batches(10, 0, 1));
}

TEST_CASE("synthetic corpus") {
  TempDir dir("synth");
  SynthOptions opts;
  opts.min_seconds = 0.5;
  opts.max_seconds = 1.5;
  const auto entries = synth_dataset(10, 3, dir.path(), opts);
  REQUIRE(entries.size() == 20);
  CHECK(std::count_if(entries.begin(), entries.end(), [](auto& e) { return e.key == Label::bonafide; }) == 10);
  CHECK(std::count_if(entries.begin(), entries.end(), [](auto& e) { return e.key == Label::spoof; }) == 10);
  const auto on_disk = parse_protocol(dir / "protocol.txt");
  CHECK(on_disk == entries);
  std::set<std::string> systems;
  for (const auto& e : entries) {
    const auto x = read_wav_samples(audio_path(dir.path(), e.utterance_id));
    CHECK(x.size() >= 8000);
    CHECK(x.size() <= 24000);
    if (e.key == Label::spoof) systems.insert(e.system_id);
    else CHECK(e.system_id == "-");
  }
  CHECK(systems.size() >= 2);

  TempDir again("synth2");
  synth_dataset(10, 3, again.path(), opts);
  for (const auto& e : entries) {
    CHECK(read_file(audio_path(dir.path(), e.utterance_id)) == read_file(audio_path(again.path(), e.utterance_id)));
  }
  CHECK(read_file(dir / "protocol.txt") == read_file(again / "protocol.txt"));
  CHECK_THROWS(synth_dataset(0, 3, again.path(), opts));
}

TEST_CASE("spoof artifacts") {
  std::mt19937_64 rng(4);
  const auto clean = synth_bonafide(rng, 16000);
  float peak = 0;
  for (float s : clean) peak = std::max(peak, std::abs(s));
  CHECK(peak == doctest::Approx(kSynthPeak).epsilon(1e-6));

  auto clipped = clean;
  apply_artifact(clipped, SpoofArtifact::clipping);
  for (float s : clipped) CHECK(std::abs(s) <= 0.6f * peak);

  auto quantized = clean;
  apply_artifact(quantized, SpoofArtifact::requantization);
  std::set<float> levels(quantized.begin(), quantized.end());
  CHECK(levels.size() <= 16);
  for (float s : quantized) CHECK(std::round(s * 8) == s * 8);

  auto smooth = clean;
  apply_artifact(smooth, SpoofArtifact::lowpass);
  // Energy of the second difference, dominated by the broadband noise.
  double rough_clean = 0, rough_smooth = 0;
  for (std::size_t i = 2; i < clean.size(); ++i) {
    rough_clean += std::pow(clean[i] - 2 * clean[i - 1] + clean[i - 2], 2);
    rough_smooth += std::pow(smooth[i] - 2 * smooth[i - 1] + smooth[i - 2], 2);
  }
  CHECK(rough_smooth < 0.1 * rough_clean);
  double expected = 0;
  for (int i = 100 - 7; i <= 100; ++i) expected += clean[std::size_t(i)];
  CHECK(smooth[100] == doctest::Approx(expected / 8).epsilon(1e-5));
}

TEST_CASE("batch streams and datasets from disk") {
  TempDir dir("batches");
  SynthOptions opts;
  opts.min_seconds = 0.2;
  opts.max_seconds = 0.4;
  auto entries = synth_dataset(35, 5, dir.path(), opts);

  BatchStream stream = make_batches(entries, dir.path(), 32, 9, 4000);
  CHECK(stream.batch_count() == 3);
  std::vector<std::size_t> sizes;
  std::set<std::string> seen;
  while (auto batch = stream.next()) {
    sizes.push_back(static_cast<std::size_t>(batch->input.dim(0)));
    CHECK(batch->input.dim(1) == 1);
    CHECK(batch->input.dim(2) == 4000);
    CHECK(batch->input.all_finite());
    CHECK(batch->input.values().abs().maxCoeff() <= 1.0f);
    const auto labels = label_map(entries);
    for (std::size_t i = 0; i < batch->ids.size(); ++i) {
      seen.insert(batch->ids[i]);
      CHECK(batch->labels[i] == class_index(labels.at(batch->ids[i])));
    }
  }
  CHECK(sizes == std::vector<std::size_t>{32, 32, 6});
  CHECK(seen.size() == 70);

  const Dataset d = load_dataset(entries, dir.path(), 4000);
  CHECK(d.size() == 70);
  CHECK(d.label_counts() == std::pair<std::int64_t, std::int64_t>{35, 35});
  const std::vector<std::size_t> rows{3, 40};
  const TensorF b = d.batch(rows);
  CHECK(b.shape() == Shape{2, 1, 4000});
  const auto x = align_duration(read_wav_samples(audio_path(dir.path(), entries[40].utterance_id)), 4000);
  for (Index t = 0; t < 4000; ++t) CHECK(b.at(1, 0, t) == x[std::size_t(t)]);
  CHECK(d.labels_of(rows) == std::vector<int>{1, 0});

  entries.push_back({"S", "MISSING", "-", Label::bonafide});
  CHECK_THROWS_WITH(make_batches(entries, dir.path(), 32, 9, 4000), doctest::Contains("MISSING"));
  CHECK_THROWS(load_dataset(entries, dir.path(), 4000));
}
