#pragma once

#include "tssd/tape.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

namespace tssd {

/// Per-class loss weights, indexed by class (0 spoof, 1 bona fide).
struct ClassWeights {
  double spoof = 1.0;
  double bonafide = 1.0;

  double operator[](int label) const { return label == 0 ? spoof : bonafide; }
};

/// w_c = (N_0 + N_1) / (2 N_c): inverse class frequency, scaled so balanced
/// data gives unit weights.
inline ClassWeights class_weights(std::int64_t n_spoof, std::int64_t n_bonafide) {
  if (n_spoof <= 0 || n_bonafide <= 0) {
    throw std::invalid_argument("class_weights: both classes must be present in the training data");
  }
  const double total = static_cast<double>(n_spoof + n_bonafide);
  return {total / (2.0 * static_cast<double>(n_spoof)), total / (2.0 * static_cast<double>(n_bonafide))};
}

namespace detail {

inline void check_labels(std::span<const int> labels, std::size_t batch, const char* who) {
  if (labels.size() != batch) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(labels.size()) + " labels for batch of " +
                                std::to_string(batch));
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument(std::string(who) + ": label " + std::to_string(y) + " not in {0,1}");
  }
}

}  // namespace detail

/// Batch mean of -w_{y_i} * log z_{y_i}, given B x 2 log-probabilities.
template <typename Scalar>
Var wce_loss(Tape<Scalar>& tape, Var logprobs, std::span<const int> labels, const ClassWeights& weights) {
  const auto& lp = tape.value(logprobs);
  if (lp.rank() != 2 || lp.dim(1) != 2) throw std::invalid_argument("wce_loss: expected B x 2 log-probabilities");
  const Index batch = lp.dim(0);
  detail::check_labels(labels, static_cast<std::size_t>(batch), "wce_loss");
  Scalar total = 0;
  for (Index i = 0; i < batch; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    total += static_cast<Scalar>(weights[y]) * -lp.at(i, y);
  }
  Tensor<Scalar> out({1});
  out[0] = total / static_cast<Scalar>(batch);
  std::vector<int> y(labels.begin(), labels.end());
  return tape.record("wce_loss", std::move(out), [logprobs, y = std::move(y), weights, batch](Tape<Scalar>& t, Var o) {
    if (!t.requires_grad(logprobs)) return;
    const Scalar scale = t.grad(o)[0] / static_cast<Scalar>(batch);
    auto& g = t.grad(logprobs);
    for (Index i = 0; i < batch; ++i) {
      const int label = y[static_cast<std::size_t>(i)];
      g[i * 2 + label] -= static_cast<Scalar>(weights[label]) * scale;
    }
  });
}

/// Plain cross-entropy: WCE with unit weights.
template <typename Scalar>
Var ce_loss(Tape<Scalar>& tape, Var logprobs, std::span<const int> labels) {
  return wce_loss(tape, logprobs, labels, ClassWeights{});
}

/// Batch mean of lambda * CE(z, a) + (1 - lambda) * CE(z, b).
///
/// Evaluated with the heavier label first, so that swapping (a, b) and
/// replacing lambda by 1 - lambda reproduces the value bit for bit.
template <typename Scalar>
Var mixup_loss(Tape<Scalar>& tape, Var logprobs, std::span<const int> labels_a, std::span<const int> labels_b,
               double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("mixup_loss: lambda outside [0, 1]");
  const auto& lp = tape.value(logprobs);
  if (lp.rank() != 2 || lp.dim(1) != 2) throw std::invalid_argument("mixup_loss: expected B x 2 log-probabilities");
  const Index batch = lp.dim(0);
  detail::check_labels(labels_a, static_cast<std::size_t>(batch), "mixup_loss");
  detail::check_labels(labels_b, static_cast<std::size_t>(batch), "mixup_loss");
  if (lambda < 0.5) {
    std::swap(labels_a, labels_b);
    lambda = 1.0 - lambda;
  }
  const Scalar wa = static_cast<Scalar>(lambda);
  const Scalar wb = static_cast<Scalar>(1.0 - lambda);
  Scalar total = 0;
  for (Index i = 0; i < batch; ++i) {
    const auto k = static_cast<std::size_t>(i);
    total += wa * -lp.at(i, labels_a[k]) + wb * -lp.at(i, labels_b[k]);
  }
  Tensor<Scalar> out({1});
  out[0] = total / static_cast<Scalar>(batch);
  std::vector<int> ya(labels_a.begin(), labels_a.end());
  std::vector<int> yb(labels_b.begin(), labels_b.end());
  return tape.record("mixup_loss", std::move(out),
                     [logprobs, ya = std::move(ya), yb = std::move(yb), wa, wb, batch](Tape<Scalar>& t, Var o) {
                       if (!t.requires_grad(logprobs)) return;
                       const Scalar scale = t.grad(o)[0] / static_cast<Scalar>(batch);
                       auto& g = t.grad(logprobs);
                       for (Index i = 0; i < batch; ++i) {
                         const auto k = static_cast<std::size_t>(i);
                         g[i * 2 + ya[k]] -= wa * scale;
                         g[i * 2 + yb[k]] -= wb * scale;
                       }
                     });
}

}  // namespace tssd
