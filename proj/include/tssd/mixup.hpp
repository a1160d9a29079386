#pragma once

#include "tssd/tensor.hpp"

#include <random>
#include <span>
#include <vector>

namespace tssd {

/// Draws lambda ~ Beta(alpha, alpha) as g1 / (g1 + g2) from two Gamma(alpha, 1)
/// variates, clamped to [1e-7, 1 - 1e-7]. Small alphas are sampled in log
/// space so the draws do not underflow.
double sample_beta(double alpha, std::mt19937_64& rng);

struct MixupBatch {
  TensorF input;
  std::vector<int> labels_a;
  std::vector<int> labels_b;
  double lambda = 1.0;
};

/// x~_i = lambda * x_i + (1 - lambda) * x_perm(i), one lambda per batch.
MixupBatch mixup_batch(const TensorF& input, std::span<const int> labels, double lambda,
                       std::span<const std::size_t> permutation);

/// Uniformly random permutation of [0, n).
std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng);

}  // namespace tssd
