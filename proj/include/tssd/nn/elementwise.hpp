#pragma once

#include "tssd/tape.hpp"

#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

namespace tssd::nn {

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return Tensor<Scalar>(x.shape(), x.values().max(Scalar(0)));
}

// Gradient at exactly zero is zero.
template <typename Scalar>
Var relu(Tape<Scalar>& tape, Var x) {
  const auto& in = tape.value(x);
  if (in.size() > 0) tape.note_kink_margin(in.values().abs().minCoeff());
  return tape.record("relu", relu(in), [x](Tape<Scalar>& t, Var o) {
    if (!t.requires_grad(x)) return;
    t.grad(x) += (t.value(x).values() > Scalar(0)).select(t.grad(o), Scalar(0));
  });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  return Tensor<Scalar>(a.shape(), a.values() + b.values());
}

template <typename Scalar>
Var add(Tape<Scalar>& tape, Var a, Var b) {
  return tape.record("add", add(tape.value(a), tape.value(b)), [a, b](Tape<Scalar>& t, Var o) {
    if (t.requires_grad(a)) t.grad(a) += t.grad(o);
    if (t.requires_grad(b)) t.grad(b) += t.grad(o);
  });
}

/// Joins B x Ci x L tensors along the channel axis in argument order.
template <typename Scalar>
Tensor<Scalar> concat_channels(std::span<const Tensor<Scalar>* const> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape& first = parts.front()->shape();
  if (first.size() != 3) throw std::invalid_argument("concat_channels: inputs must be B x C x L");
  Index channels = 0;
  for (const auto* p : parts) {
    if (p->rank() != 3 || p->dim(0) != first[0] || p->dim(2) != first[2]) {
      throw std::invalid_argument("concat_channels: shape mismatch " + shape_string(p->shape()) + " vs " +
                                  shape_string(first));
    }
    channels += p->dim(1);
  }
  const Index batch = first[0], length = first[2];
  Tensor<Scalar> out({batch, channels, length});
  for (Index n = 0; n < batch; ++n) {
    Index c0 = 0;
    for (const auto* p : parts) {
      out.item(n).middleRows(c0, p->dim(1)) = p->item(n);
      c0 += p->dim(1);
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<Tensor<Scalar>>& parts) {
  std::vector<const Tensor<Scalar>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  return concat_channels<Scalar>(std::span<const Tensor<Scalar>* const>(ptrs));
}

template <typename Scalar>
Var concat_channels(Tape<Scalar>& tape, const std::vector<Var>& parts) {
  std::vector<const Tensor<Scalar>*> ptrs;
  for (Var v : parts) ptrs.push_back(&tape.value(v));
  Tensor<Scalar> out = concat_channels<Scalar>(std::span<const Tensor<Scalar>* const>(ptrs));
  return tape.record("concat_channels", std::move(out), [parts](Tape<Scalar>& t, Var o) {
    const Shape& shape = t.shape(o);
    const Index batch = shape[0], channels = shape[1], length = shape[2];
    const auto& dy = t.grad(o);
    Index c0 = 0;
    for (Var part : parts) {
      const Index pc = t.shape(part)[1];
      if (t.requires_grad(part)) {
        auto& dx = t.grad(part);
        for (Index n = 0; n < batch; ++n) {
          dx.segment(n * pc * length, pc * length) += dy.segment((n * channels + c0) * length, pc * length);
        }
      }
      c0 += pc;
    }
  });
}

/// Sum of all elements, as a 1-element tensor.
template <typename Scalar>
Var sum(Tape<Scalar>& tape, Var x) {
  Tensor<Scalar> out({1});
  out[0] = tape.value(x).values().sum();
  return tape.record("sum", std::move(out), [x](Tape<Scalar>& t, Var o) {
    if (t.requires_grad(x)) t.grad(x) += t.grad(o)[0];
  });
}

/// sum(x * weights) for a fixed weight tensor of the same shape.
template <typename Scalar>
Var weighted_sum(Tape<Scalar>& tape, Var x, const Tensor<Scalar>& weights) {
  if (tape.shape(x) != weights.shape()) throw std::invalid_argument("weighted_sum: shape mismatch");
  Tensor<Scalar> out({1});
  out[0] = (tape.value(x).values() * weights.values()).sum();
  auto w = std::make_shared<typename Tensor<Scalar>::Array>(weights.values());
  return tape.record("weighted_sum", std::move(out), [x, w](Tape<Scalar>& t, Var o) {
    if (t.requires_grad(x)) t.grad(x) += t.grad(o)[0] * *w;
  });
}

}  // namespace tssd::nn
