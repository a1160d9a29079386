#pragma once

#include "tssd/tape.hpp"
#include "tssd/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tssd {

template <typename Scalar>
struct AdamState {
  using Array = typename Tensor<Scalar>::Array;

  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double base_lr = 1e-3;
  std::int64_t step = 0;
  /// First and second moments, one per parameter, sized on the first step.
  std::vector<Array> m;
  std::vector<Array> v;

  friend bool operator==(const AdamState& a, const AdamState& b) {
    if (a.beta1 != b.beta1 || a.beta2 != b.beta2 || a.epsilon != b.epsilon || a.base_lr != b.base_lr ||
        a.step != b.step || a.m.size() != b.m.size() || a.v.size() != b.v.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.m.size(); ++i) {
      if (a.m[i].size() != b.m[i].size() || !(a.m[i] == b.m[i]).all()) return false;
      if (a.v[i].size() != b.v[i].size() || !(a.v[i] == b.v[i]).all()) return false;
    }
    return true;
  }
};

/// One bias-corrected Adam update at learning rate `lr`, reading gradients
/// from each parameter's grad buffer. Throws NonFiniteError without touching
/// parameters or state if any gradient is NaN/Inf.
template <typename Scalar>
void adam_step(std::span<Tensor<Scalar>* const> params, AdamState<Scalar>& state, double lr) {
  if (state.m.empty() && state.step == 0) {
    for (const auto* p : params) {
      state.m.push_back(AdamState<Scalar>::Array::Zero(p->size()));
      state.v.push_back(AdamState<Scalar>::Array::Zero(p->size()));
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                                " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* p = params[i];
    if (state.m[i].size() != p->size() || state.v[i].size() != p->size()) {
      throw std::invalid_argument("adam_step: moment shape mismatch for parameter " + std::to_string(i));
    }
    if (p->grad().size() != p->size()) throw std::invalid_argument("adam_step: parameter " + std::to_string(i) + " has no gradient");
    if (!p->grad().allFinite()) throw NonFiniteError("adam_step: non-finite gradient in parameter " + std::to_string(i));
  }

  ++state.step;
  const Scalar b1 = static_cast<Scalar>(state.beta1);
  const Scalar b2 = static_cast<Scalar>(state.beta2);
  const Scalar correction1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, double(state.step)));
  const Scalar correction2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, double(state.step)));
  const Scalar rate = static_cast<Scalar>(lr);
  const Scalar eps = static_cast<Scalar>(state.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& g = params[i]->grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    params[i]->values() -= rate * (m / correction1) / ((v / correction2).sqrt() + eps);
  }
}

/// base_lr * decay^epoch.
inline double decay_lr(double base_lr, int epoch, double decay = 0.95) {
  if (epoch < 0) throw std::invalid_argument("decay_lr: negative epoch");
  return base_lr * std::pow(decay, epoch);
}

}  // namespace tssd
