#pragma once

#include "tssd/nn/layer_params.hpp"
#include "tssd/tape.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace tssd::nn {

/// Zero padding that keeps the time length unchanged at stride 1. An odd
/// total puts the extra sample on the right.
struct SamePadding {
  Index left = 0;
  Index right = 0;
};

inline SamePadding same_padding(Index kernel, Index dilation) {
  const Index total = dilation * (kernel - 1);
  return {total / 2, total - total / 2};
}

namespace detail {

// col(c*K + j, t) = x(c, t + j*dilation - left), zero outside [0, L).
template <typename Scalar, typename XMap>
void im2col(const XMap& x, Index kernel, Index dilation, Index left, RowMatrix<Scalar>& col) {
  const Index channels = x.rows();
  const Index length = x.cols();
  col.setZero(channels * kernel, length);
  for (Index j = 0; j < kernel; ++j) {
    const Index shift = j * dilation - left;
    const Index t0 = std::max<Index>(0, -shift);
    const Index t1 = std::min<Index>(length, length - shift);
    if (t1 <= t0) continue;
    for (Index c = 0; c < channels; ++c) {
      col.row(c * kernel + j).segment(t0, t1 - t0) = x.row(c).segment(t0 + shift, t1 - t0);
    }
  }
}

template <typename Scalar, typename XMap>
void col2im_add(const RowMatrix<Scalar>& col, Index kernel, Index dilation, Index left, XMap& dx) {
  const Index channels = dx.rows();
  const Index length = dx.cols();
  for (Index j = 0; j < kernel; ++j) {
    const Index shift = j * dilation - left;
    const Index t0 = std::max<Index>(0, -shift);
    const Index t1 = std::min<Index>(length, length - shift);
    if (t1 <= t0) continue;
    for (Index c = 0; c < channels; ++c) {
      dx.row(c).segment(t0 + shift, t1 - t0) += col.row(c * kernel + j).segment(t0, t1 - t0);
    }
  }
}

template <typename Scalar>
void check_conv_args(const Shape& input, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias, Index dilation) {
  if (input.size() != 3) throw std::invalid_argument("conv1d: input must be B x C x L, got " + shape_string(input));
  if (weight.rank() != 3) throw std::invalid_argument("conv1d: weight must be out x in x kernel");
  if (dilation < 1) throw std::invalid_argument("conv1d: dilation must be positive, got " + std::to_string(dilation));
  if (input[1] != weight.dim(1)) {
    throw std::invalid_argument("conv1d: input has " + std::to_string(input[1]) + " channels, weight expects " +
                                std::to_string(weight.dim(1)));
  }
  if (bias.size() != weight.dim(0)) throw std::invalid_argument("conv1d: bias length must equal out channels");
  const Index kernel = weight.dim(2);
  const Index effective = dilation * (kernel - 1) + 1;
  if (kernel < 1 || input[2] + effective - 1 < effective) {
    throw std::invalid_argument("conv1d: kernel span " + std::to_string(effective) + " longer than padded input");
  }
}

}  // namespace detail

/// Stride-1 dilated convolution with SAME padding.
template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                      Index dilation) {
  detail::check_conv_args(input.shape(), weight, bias, dilation);
  const Index batch = input.dim(0), in_ch = input.dim(1), length = input.dim(2);
  const Index out_ch = weight.dim(0), kernel = weight.dim(2);
  const SamePadding pad = same_padding(kernel, dilation);
  typename Tensor<Scalar>::ConstMatrixMap w(weight.data(), out_ch, in_ch * kernel);
  const Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> b(bias.data(), out_ch);

  Tensor<Scalar> out({batch, out_ch, length});
  RowMatrix<Scalar> col;
  for (Index n = 0; n < batch; ++n) {
    detail::im2col<Scalar>(input.item(n), kernel, dilation, pad.left, col);
    auto y = out.item(n);
    y.noalias() = w * col;
    y.colwise() += b;
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& input, const LayerParams<Scalar>& params, Index dilation) {
  return conv1d(input, params.weight, params.bias, dilation);
}

/// Vector-Jacobian products of conv1d. `grad_input` may be null.
template <typename Scalar>
void conv1d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weight, Index dilation,
                     const typename Tensor<Scalar>::Array& grad_out, typename Tensor<Scalar>::Array* grad_input,
                     typename Tensor<Scalar>::Array& grad_weight, typename Tensor<Scalar>::Array& grad_bias) {
  const Index batch = input.dim(0), in_ch = input.dim(1), length = input.dim(2);
  const Index out_ch = weight.dim(0), kernel = weight.dim(2);
  const SamePadding pad = same_padding(kernel, dilation);
  typename Tensor<Scalar>::ConstMatrixMap w(weight.data(), out_ch, in_ch * kernel);
  typename Tensor<Scalar>::MatrixMap dw(grad_weight.data(), out_ch, in_ch * kernel);
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> db(grad_bias.data(), out_ch);

  RowMatrix<Scalar> col;
  RowMatrix<Scalar> dcol;
  for (Index n = 0; n < batch; ++n) {
    typename Tensor<Scalar>::ConstMatrixMap dy(grad_out.data() + n * out_ch * length, out_ch, length);
    detail::im2col<Scalar>(input.item(n), kernel, dilation, pad.left, col);
    dw.noalias() += dy * col.transpose();
    db += dy.rowwise().sum();
    if (grad_input != nullptr) {
      dcol.noalias() = w.transpose() * dy;
      typename Tensor<Scalar>::MatrixMap dx(grad_input->data() + n * in_ch * length, in_ch, length);
      detail::col2im_add<Scalar>(dcol, kernel, dilation, pad.left, dx);
    }
  }
}

template <typename Scalar>
Var conv1d(Tape<Scalar>& tape, Var input, LayerParams<Scalar>& params, Index dilation) {
  const Var weight = tape.parameter(params.weight);
  const Var bias = tape.parameter(params.bias);
  Tensor<Scalar> out = conv1d(tape.value(input), params.weight, params.bias, dilation);
  return tape.record("conv1d", std::move(out), [input, weight, bias, dilation](Tape<Scalar>& t, Var o) {
    auto* grad_input = t.requires_grad(input) ? &t.grad(input) : nullptr;
    conv1d_backward(t.value(input), t.value(weight), dilation, t.grad(o), grad_input, t.grad(weight), t.grad(bias));
  });
}

}  // namespace tssd::nn
