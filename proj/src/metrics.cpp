#include "tssd/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace tssd {

std::vector<double> ScoreSet::scores_of(Label label) const {
  std::vector<double> out;
  for (const auto& e : entries) {
    if (e.label == label) out.push_back(e.score);
  }
  return out;
}

bool ScoreSet::has_both_classes() const {
  bool bona = false, spoof = false;
  for (const auto& e : entries) {
    bona |= e.label == Label::bonafide;
    spoof |= e.label == Label::spoof;
  }
  return bona && spoof;
}

namespace {

template <typename T>
double logit_difference(std::span<const T> logits) {
  if (logits.size() != 2) throw std::invalid_argument("score_from_logits: expected two logits");
  if (!std::isfinite(logits[0]) || !std::isfinite(logits[1])) {
    throw std::invalid_argument("score_from_logits: non-finite logits");
  }
  return static_cast<double>(logits[1]) - static_cast<double>(logits[0]);
}

void check_classes(std::span<const double> bonafide, std::span<const double> spoof, const char* who) {
  if (bonafide.empty() || spoof.empty()) {
    throw std::invalid_argument(std::string(who) + ": needs at least one bona fide and one spoof score");
  }
  auto finite = [](double s) { return std::isfinite(s); };
  if (!std::all_of(bonafide.begin(), bonafide.end(), finite) || !std::all_of(spoof.begin(), spoof.end(), finite)) {
    throw std::invalid_argument(std::string(who) + ": scores must be finite");
  }
}

// Walks the candidate thresholds in ascending order, calling
// visit(threshold, false_accepts, false_rejects).
template <typename Visit>
void sweep(std::span<const double> bonafide, std::span<const double> spoof, Visit&& visit) {
  std::vector<double> bona(bonafide.begin(), bonafide.end());
  std::vector<double> fake(spoof.begin(), spoof.end());
  std::sort(bona.begin(), bona.end());
  std::sort(fake.begin(), fake.end());
  std::vector<double> all;
  all.reserve(bona.size() + fake.size());
  std::merge(bona.begin(), bona.end(), fake.begin(), fake.end(), std::back_inserter(all));
  all.erase(std::unique(all.begin(), all.end()), all.end());

  const auto nb = static_cast<std::int64_t>(bona.size());
  const auto ns = static_cast<std::int64_t>(fake.size());
  visit(-std::numeric_limits<double>::infinity(), ns, std::int64_t{0});
  std::size_t ib = 0, is = 0;
  for (std::size_t k = 0; k + 1 < all.size(); ++k) {
    // Threshold strictly between all[k] and all[k+1]: everything <= all[k] is rejected.
    while (ib < bona.size() && bona[ib] <= all[k]) ++ib;
    while (is < fake.size() && fake[is] <= all[k]) ++is;
    double t = all[k] + (all[k + 1] - all[k]) / 2;
    if (!(t > all[k])) t = all[k + 1];  // adjacent doubles
    visit(t, ns - static_cast<std::int64_t>(is), static_cast<std::int64_t>(ib));
  }
  visit(std::numeric_limits<double>::infinity(), std::int64_t{0}, nb);
}

}  // namespace

double score_from_logits(std::span<const float> logits) { return logit_difference(logits); }
double score_from_logits(std::span<const double> logits) { return logit_difference(logits); }

EerResult compute_eer(std::span<const double> bonafide, std::span<const double> spoof) {
  check_classes(bonafide, spoof, "compute_eer");
  const auto nb = static_cast<std::int64_t>(bonafide.size());
  const auto ns = static_cast<std::int64_t>(spoof.size());
  // |FAR - FRR| compared exactly as |fa * nb - fr * ns| / (ns * nb).
  std::int64_t best_gap = std::numeric_limits<std::int64_t>::max();
  EerResult best;
  sweep(bonafide, spoof, [&](double t, std::int64_t fa, std::int64_t fr) {
    const std::int64_t gap = std::llabs(fa * nb - fr * ns);
    if (gap < best_gap) {
      best_gap = gap;
      best.threshold = t;
      best.far = static_cast<double>(fa) / static_cast<double>(ns);
      best.frr = static_cast<double>(fr) / static_cast<double>(nb);
      best.eer = 0.5 * (best.far + best.frr);
    }
  });
  return best;
}

EerResult compute_eer(const ScoreSet& scores) {
  const auto bona = scores.scores_of(Label::bonafide);
  const auto spoof = scores.scores_of(Label::spoof);
  return compute_eer(bona, spoof);
}

std::vector<DetPoint> det_points(std::span<const double> bonafide, std::span<const double> spoof) {
  check_classes(bonafide, spoof, "det_points");
  const double nb = static_cast<double>(bonafide.size());
  const double ns = static_cast<double>(spoof.size());
  std::vector<DetPoint> points;
  sweep(bonafide, spoof, [&](double t, std::int64_t fa, std::int64_t fr) {
    points.push_back({t, static_cast<double>(fa) / ns, static_cast<double>(fr) / nb});
  });
  return points;
}

std::vector<DetPoint> det_points(const ScoreSet& scores) {
  const auto bona = scores.scores_of(Label::bonafide);
  const auto spoof = scores.scores_of(Label::spoof);
  return det_points(bona, spoof);
}

std::string format_scores(const ScoreSet& scores) {
  std::string out;
  char buf[64];
  for (const auto& e : scores.entries) {
    const auto r = std::to_chars(buf, buf + sizeof(buf), e.score, std::chars_format::general, 17);
    out += e.id;
    out += ' ';
    out.append(buf, r.ptr);
    out += '\n';
  }
  return out;
}

void write_scores(const ScoreSet& scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write score file " + path.string());
  const std::string text = format_scores(scores);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("failed writing score file " + path.string());
}

ScoreReadResult parse_scores(const std::string& text, const std::unordered_map<std::string, Label>* labels) {
  ScoreReadResult result;
  std::unordered_set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string id, score_text, extra;
    if (!(fields >> id)) continue;
    if (!(fields >> score_text) || (fields >> extra)) {
      throw std::invalid_argument("score file line " + std::to_string(line_no) + ": expected '<id> <score>'");
    }
    double score = 0;
    const auto [ptr, ec] = std::from_chars(score_text.data(), score_text.data() + score_text.size(), score);
    if (ec != std::errc() || ptr != score_text.data() + score_text.size() || !std::isfinite(score)) {
      throw std::invalid_argument("score file line " + std::to_string(line_no) + ": '" + score_text +
                                  "' is not a finite number");
    }
    if (!seen.insert(id).second) {
      throw std::invalid_argument("score file line " + std::to_string(line_no) + ": duplicate id '" + id + "'");
    }
    ScoreEntry entry{id, score, Label::unknown};
    if (labels != nullptr) {
      if (auto it = labels->find(id); it != labels->end()) {
        entry.label = it->second;
      } else {
        result.unmatched.push_back(id);
      }
    }
    result.scores.entries.push_back(std::move(entry));
  }
  return result;
}

ScoreReadResult read_scores(const std::filesystem::path& path, const std::unordered_map<std::string, Label>* labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open score file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_scores(text, labels);
}

}  // namespace tssd
