#include "tssd/mixup.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tssd {

namespace {

// log of a Gamma(alpha, 1) draw. For alpha < 1 uses
// Gamma(alpha) = Gamma(alpha + 1) * U^(1/alpha).
double log_gamma_draw(double alpha, std::mt19937_64& rng) {
  if (alpha >= 1.0) return std::log(std::gamma_distribution<double>(alpha, 1.0)(rng));
  const double boosted = std::gamma_distribution<double>(alpha + 1.0, 1.0)(rng);
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  while (u == 0.0) u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return std::log(boosted) + std::log(u) / alpha;
}

}  // namespace

double sample_beta(double alpha, std::mt19937_64& rng) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("sample_beta: alpha must be positive, got " + std::to_string(alpha));
  }
  const double l1 = log_gamma_draw(alpha, rng);
  const double l2 = log_gamma_draw(alpha, rng);
  // g1 / (g1 + g2) = 1 / (1 + exp(l2 - l1))
  const double lambda = 1.0 / (1.0 + std::exp(l2 - l1));
  return std::clamp(lambda, 1e-7, 1.0 - 1e-7);
}

MixupBatch mixup_batch(const TensorF& input, std::span<const int> labels, double lambda,
                       std::span<const std::size_t> permutation) {
  if (input.rank() < 1) throw std::invalid_argument("mixup_batch: input has no batch axis");
  const auto batch = static_cast<std::size_t>(input.dim(0));
  if (permutation.size() != batch) {
    throw std::invalid_argument("mixup_batch: permutation length " + std::to_string(permutation.size()) +
                                " != batch size " + std::to_string(batch));
  }
  if (labels.size() != batch) throw std::invalid_argument("mixup_batch: label count != batch size");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("mixup_batch: lambda outside [0, 1]");
  std::vector<bool> seen(batch, false);
  for (std::size_t p : permutation) {
    if (p >= batch || seen[p]) throw std::invalid_argument("mixup_batch: not a permutation");
    seen[p] = true;
  }

  MixupBatch out{TensorF(input.shape()), std::vector<int>(labels.begin(), labels.end()), {}, lambda};
  const Index row = input.size() / input.dim(0);
  const float a = static_cast<float>(lambda);
  const float b = static_cast<float>(1.0 - lambda);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto j = permutation[i];
    out.input.values().segment(static_cast<Index>(i) * row, row) =
        a * input.values().segment(static_cast<Index>(i) * row, row) +
        b * input.values().segment(static_cast<Index>(j) * row, row);
    out.labels_b.push_back(labels[j]);
  }
  return out;
}

std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace tssd
