#pragma once

#include "tssd/tape.hpp"

#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace tssd::nn {

template <typename Scalar>
struct PoolResult {
  Tensor<Scalar> output;
  /// Flat input index that produced each output element.
  std::vector<Index> argmax;
  /// Smallest gap between a window maximum and its runner-up.
  Scalar margin = std::numeric_limits<Scalar>::infinity();
};

/// Non-overlapping max pooling with stride equal to the window. Trailing
/// samples that do not fill a window are dropped; ties go to the first index.
template <typename Scalar>
PoolResult<Scalar> maxpool1d_with_indices(const Tensor<Scalar>& input, Index window) {
  if (input.rank() != 3) throw std::invalid_argument("maxpool1d: input must be B x C x L");
  if (window < 1) throw std::invalid_argument("maxpool1d: window must be positive");
  const Index batch = input.dim(0), channels = input.dim(1), length = input.dim(2);
  if (length < window) {
    throw std::invalid_argument("maxpool1d: length " + std::to_string(length) + " shorter than window " +
                                std::to_string(window));
  }
  const Index out_len = length / window;
  PoolResult<Scalar> r{Tensor<Scalar>({batch, channels, out_len}), {}, std::numeric_limits<Scalar>::infinity()};
  r.argmax.resize(static_cast<std::size_t>(r.output.size()));
  const Scalar* x = input.data();
  Scalar* y = r.output.data();
  for (Index row = 0; row < batch * channels; ++row) {
    for (Index t = 0; t < out_len; ++t) {
      const Index start = row * length + t * window;
      Index best = start;
      Scalar runner_up = -std::numeric_limits<Scalar>::infinity();
      for (Index i = start + 1; i < start + window; ++i) {
        if (x[i] > x[best]) {
          runner_up = x[best];
          best = i;
        } else if (x[i] > runner_up) {
          runner_up = x[i];
        }
      }
      const Index o = row * out_len + t;
      y[o] = x[best];
      r.argmax[static_cast<std::size_t>(o)] = best;
      if (window > 1) r.margin = std::min(r.margin, x[best] - runner_up);
    }
  }
  return r;
}

template <typename Scalar>
Tensor<Scalar> maxpool1d(const Tensor<Scalar>& input, Index window) {
  return maxpool1d_with_indices(input, window).output;
}

/// Per-channel maximum over the whole time axis: B x C x L -> B x C.
template <typename Scalar>
PoolResult<Scalar> global_maxpool_with_indices(const Tensor<Scalar>& input) {
  if (input.rank() != 3) throw std::invalid_argument("global_maxpool: input must be B x C x L");
  if (input.dim(2) < 1) throw std::invalid_argument("global_maxpool: empty time axis");
  PoolResult<Scalar> r = maxpool1d_with_indices(input, input.dim(2));
  r.output = Tensor<Scalar>({input.dim(0), input.dim(1)}, std::move(r.output.values()));
  return r;
}

template <typename Scalar>
Tensor<Scalar> global_maxpool(const Tensor<Scalar>& input) {
  return global_maxpool_with_indices(input).output;
}

namespace detail {

template <typename Scalar>
Var record_pool(Tape<Scalar>& tape, Var input, PoolResult<Scalar> r, const char* op) {
  tape.note_kink_margin(r.margin);
  auto argmax = std::make_shared<std::vector<Index>>(std::move(r.argmax));
  return tape.record(op, std::move(r.output), [input, argmax](Tape<Scalar>& t, Var o) {
    if (!t.requires_grad(input)) return;
    const auto& dy = t.grad(o);
    auto& dx = t.grad(input);
    for (std::size_t i = 0; i < argmax->size(); ++i) dx[(*argmax)[i]] += dy[static_cast<Index>(i)];
  });
}

}  // namespace detail

template <typename Scalar>
Var maxpool1d(Tape<Scalar>& tape, Var input, Index window) {
  return detail::record_pool(tape, input, maxpool1d_with_indices(tape.value(input), window), "maxpool1d");
}

template <typename Scalar>
Var global_maxpool(Tape<Scalar>& tape, Var input) {
  return detail::record_pool(tape, input, global_maxpool_with_indices(tape.value(input)), "global_maxpool");
}

}  // namespace tssd::nn
