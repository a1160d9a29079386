#pragma once

#include "tssd/nn/layer_params.hpp"
#include "tssd/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tssd::nn {

/// out = input * W^T + b, with input B x N and W M x N.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& input, const LayerParams<Scalar>& params) {
  if (input.rank() != 2) throw std::invalid_argument("linear: input must be B x N");
  if (params.weight.rank() != 2 || params.weight.dim(1) != input.dim(1) || params.bias.size() != params.weight.dim(0)) {
    throw std::invalid_argument("linear: " + params.name + " weight " + shape_string(params.weight.shape()) +
                                " does not accept input " + shape_string(input.shape()));
  }
  const Index batch = input.dim(0), out_features = params.weight.dim(0);
  Tensor<Scalar> out({batch, out_features});
  const Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> b(params.bias.data(), out_features);
  // Row by row, so each example's logits do not depend on the batch size.
  for (Index r = 0; r < batch; ++r) {
    out.matrix().row(r).transpose().noalias() = params.weight.matrix() * input.matrix().row(r).transpose();
  }
  out.matrix().rowwise() += b;
  return out;
}

template <typename Scalar>
Var linear(Tape<Scalar>& tape, Var input, LayerParams<Scalar>& params) {
  const Var weight = tape.parameter(params.weight);
  const Var bias = tape.parameter(params.bias);
  return tape.record("linear", linear(tape.value(input), params), [input, weight, bias](Tape<Scalar>& t, Var o) {
    const Shape& ws = t.shape(weight);
    const Index batch = t.shape(o)[0], out_features = ws[0], in_features = ws[1];
    typename Tensor<Scalar>::ConstMatrixMap dy(t.grad(o).data(), batch, out_features);
    typename Tensor<Scalar>::MatrixMap dw(t.grad(weight).data(), out_features, in_features);
    dw.noalias() += dy.transpose() * t.value(input).matrix();
    Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(t.grad(bias).data(), out_features) += dy.colwise().sum();
    if (t.requires_grad(input)) {
      typename Tensor<Scalar>::MatrixMap dx(t.grad(input).data(), batch, in_features);
      dx.noalias() += dy * t.value(weight).matrix();
    }
  });
}

/// Row-wise log of softmax, computed after subtracting the row maximum.
template <typename Scalar>
Tensor<Scalar> log_softmax(const Tensor<Scalar>& logits) {
  if (logits.rank() != 2 || logits.dim(1) < 2) throw std::invalid_argument("log_softmax: logits must be B x K, K >= 2");
  if (!logits.all_finite()) throw std::invalid_argument("log_softmax: non-finite logits");
  Tensor<Scalar> out(logits.shape());
  auto x = logits.matrix();
  auto y = out.matrix();
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    const Scalar lse = m + std::log((x.row(r).array() - m).exp().sum());
    y.row(r) = x.row(r).array() - lse;
  }
  return out;
}

template <typename Scalar>
Var log_softmax(Tape<Scalar>& tape, Var logits) {
  return tape.record("log_softmax", log_softmax(tape.value(logits)), [logits](Tape<Scalar>& t, Var o) {
    if (!t.requires_grad(logits)) return;
    const Shape& s = t.shape(o);
    typename Tensor<Scalar>::ConstMatrixMap dy(t.grad(o).data(), s[0], s[1]);
    auto y = t.value(o).matrix();
    typename Tensor<Scalar>::MatrixMap dx(t.grad(logits).data(), s[0], s[1]);
    // dx = dy - softmax * rowsum(dy)
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_sums = dy.rowwise().sum();
    dx.array() += dy.array() - y.array().exp().colwise() * row_sums.array();
  });
}

}  // namespace tssd::nn
