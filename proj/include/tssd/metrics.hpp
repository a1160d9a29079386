#pragma once

#include "tssd/labels.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace tssd {

struct ScoreEntry {
  std::string id;
  double score = 0;
  Label label = Label::unknown;
};

/// Per-utterance scores; higher means more bona fide.
struct ScoreSet {
  std::vector<ScoreEntry> entries;

  std::vector<double> scores_of(Label label) const;
  bool has_both_classes() const;
};

/// logit(bona fide) - logit(spoof), the log posterior ratio of the softmax.
double score_from_logits(std::span<const float> logits);
double score_from_logits(std::span<const double> logits);

struct EerResult {
  double eer = 0;
  double threshold = 0;
  /// Rates at the chosen threshold.
  double far = 0;
  double frr = 0;
};

/// Equal error rate by exhaustive threshold sweep.
///
/// Candidate thresholds are -inf, the midpoints between adjacent distinct
/// scores, and +inf. A score is accepted as bona fide when score >= threshold,
/// so FAR(t) is the fraction of spoofs with score >= t and FRR(t) the fraction
/// of bona fide trials with score < t. The chosen threshold minimises
/// |FAR - FRR| (lowest threshold on ties) and the EER is (FAR + FRR) / 2 there.
EerResult compute_eer(std::span<const double> bonafide, std::span<const double> spoof);
EerResult compute_eer(const ScoreSet& scores);

struct DetPoint {
  double threshold = 0;
  double far = 0;
  double frr = 0;
};

/// One point per candidate threshold of `compute_eer`, by rising threshold:
/// FAR falls from 1 to 0 while FRR rises from 0 to 1.
std::vector<DetPoint> det_points(std::span<const double> bonafide, std::span<const double> spoof);
std::vector<DetPoint> det_points(const ScoreSet& scores);

/// `<id> <score>` lines, scores at 17 significant digits.
void write_scores(const ScoreSet& scores, const std::filesystem::path& path);
std::string format_scores(const ScoreSet& scores);

struct ScoreReadResult {
  ScoreSet scores;
  /// Score ids missing from the label map (left as Label::unknown).
  std::vector<std::string> unmatched;
};

/// Parses a score file. When `labels` is given every id is looked up in it.
ScoreReadResult read_scores(const std::filesystem::path& path,
                            const std::unordered_map<std::string, Label>* labels = nullptr);
ScoreReadResult parse_scores(const std::string& text, const std::unordered_map<std::string, Label>* labels = nullptr);

}  // namespace tssd
