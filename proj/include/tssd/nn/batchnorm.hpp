#pragma once

#include "tssd/nn/layer_params.hpp"
#include "tssd/tape.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace tssd::nn {

enum class Mode { train, eval };

namespace detail {

struct BatchNormLayout {
  Index batch = 0;
  Index channels = 0;
  Index length = 1;
};

template <typename Scalar>
BatchNormLayout batchnorm_layout(const Tensor<Scalar>& input, const LayerParams<Scalar>& params) {
  if (input.rank() != 2 && input.rank() != 3) {
    throw std::invalid_argument("batchnorm1d: input must be B x C or B x C x L, got " + shape_string(input.shape()));
  }
  BatchNormLayout l{input.dim(0), input.dim(1), input.rank() == 3 ? input.dim(2) : 1};
  if (params.weight.size() != l.channels || params.bias.size() != l.channels) {
    throw std::invalid_argument("batchnorm1d: " + params.name + " expects " + std::to_string(params.weight.size()) +
                                " channels, input has " + std::to_string(l.channels));
  }
  if (!(params.epsilon > 0)) throw std::invalid_argument("batchnorm1d: epsilon must be positive");
  return l;
}

template <typename Scalar>
struct BatchNormContext {
  Tensor<Scalar> normalized;  // x-hat
  Eigen::Array<Scalar, Eigen::Dynamic, 1> inv_std;
};

}  // namespace detail

/// Batch normalization over (batch, time) per channel.
///
/// Train mode normalises with the biased batch variance and moves the running
/// statistics toward the batch statistics by `momentum`. Eval mode uses the
/// running statistics.
template <typename Scalar>
Tensor<Scalar> batchnorm1d(const Tensor<Scalar>& input, LayerParams<Scalar>& params, Mode mode,
                           detail::BatchNormContext<Scalar>* ctx = nullptr) {
  const auto l = detail::batchnorm_layout(input, params);
  const Index count = l.batch * l.length;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> mean(l.channels), inv_std(l.channels);

  if (mode == Mode::train) {
    if (count < 2) throw std::invalid_argument("batchnorm1d: train mode needs at least 2 values per channel");
    for (Index c = 0; c < l.channels; ++c) {
      double sum = 0;
      for (Index n = 0; n < l.batch; ++n) {
        sum += input.values().segment((n * l.channels + c) * l.length, l.length).template cast<double>().sum();
      }
      const double mu = sum / static_cast<double>(count);
      double sq = 0;
      for (Index n = 0; n < l.batch; ++n) {
        sq += (input.values().segment((n * l.channels + c) * l.length, l.length).template cast<double>() - mu)
                  .square()
                  .sum();
      }
      const double var = sq / static_cast<double>(count);
      mean[c] = static_cast<Scalar>(mu);
      inv_std[c] = static_cast<Scalar>(1.0 / std::sqrt(var + static_cast<double>(params.epsilon)));
      params.running_mean[c] = (Scalar(1) - params.momentum) * params.running_mean[c] + params.momentum * Scalar(mu);
      params.running_var[c] = (Scalar(1) - params.momentum) * params.running_var[c] + params.momentum * Scalar(var);
    }
  } else {
    if (params.running_mean.size() != l.channels || params.running_var.size() != l.channels) {
      throw std::logic_error("batchnorm1d: " + params.name + " has no running statistics for eval mode");
    }
    mean = params.running_mean.values();
    inv_std = (params.running_var.values() + params.epsilon).rsqrt();
  }

  Tensor<Scalar> out(input.shape());
  Tensor<Scalar> normalized(input.shape());
  for (Index n = 0; n < l.batch; ++n) {
    for (Index c = 0; c < l.channels; ++c) {
      const Index off = (n * l.channels + c) * l.length;
      auto xhat = normalized.values().segment(off, l.length);
      xhat = (input.values().segment(off, l.length) - mean[c]) * inv_std[c];
      out.values().segment(off, l.length) = xhat * params.weight[c] + params.bias[c];
    }
  }
  if (ctx != nullptr) {
    ctx->normalized = std::move(normalized);
    ctx->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename Scalar>
Var batchnorm1d(Tape<Scalar>& tape, Var input, LayerParams<Scalar>& params, Mode mode) {
  const Var gamma = tape.parameter(params.weight);
  const Var beta = tape.parameter(params.bias);
  auto ctx = std::make_shared<detail::BatchNormContext<Scalar>>();
  Tensor<Scalar> out = batchnorm1d(tape.value(input), params, mode, ctx.get());
  const auto l = detail::batchnorm_layout(tape.value(input), params);
  return tape.record("batchnorm1d", std::move(out), [input, gamma, beta, ctx, l, mode](Tape<Scalar>& t, Var o) {
    const auto& dy = t.grad(o);
    const auto& g = t.value(gamma).values();
    auto& dgamma = t.grad(gamma);
    auto& dbeta = t.grad(beta);
    const bool want_input = t.requires_grad(input);
    const Scalar count = static_cast<Scalar>(l.batch * l.length);
    for (Index c = 0; c < l.channels; ++c) {
      Scalar sum_dy = 0;
      Scalar sum_dy_xhat = 0;
      for (Index n = 0; n < l.batch; ++n) {
        const Index off = (n * l.channels + c) * l.length;
        sum_dy += dy.segment(off, l.length).sum();
        sum_dy_xhat += (dy.segment(off, l.length) * ctx->normalized.values().segment(off, l.length)).sum();
      }
      dgamma[c] += sum_dy_xhat;
      dbeta[c] += sum_dy;
      if (!want_input) continue;
      auto& dx = t.grad(input);
      const Scalar scale = g[c] * ctx->inv_std[c];
      for (Index n = 0; n < l.batch; ++n) {
        const Index off = (n * l.channels + c) * l.length;
        if (mode == Mode::train) {
          // dx = gamma * inv_std / N * (N dy - sum(dy) - xhat * sum(dy xhat))
          dx.segment(off, l.length) +=
              (scale / count) * (count * dy.segment(off, l.length) - sum_dy -
                                 ctx->normalized.values().segment(off, l.length) * sum_dy_xhat);
        } else {
          dx.segment(off, l.length) += scale * dy.segment(off, l.length);
        }
      }
    }
  });
}

}  // namespace tssd::nn
