#pragma once

#include "tssd/tensor.hpp"

#include <string>

namespace tssd::nn {

enum class LayerKind { conv1d, batchnorm1d, linear };

inline const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::batchnorm1d: return "batchnorm1d";
    case LayerKind::linear: return "linear";
  }
  return "?";
}

/// Trainable state of one layer. For batchnorm, `weight` is the scale and
/// `bias` the shift; running statistics are tracked but never trained.
template <typename Scalar>
struct LayerParams {
  std::string name;
  LayerKind kind = LayerKind::linear;
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  Scalar momentum = Scalar(0.1);
  Scalar epsilon = Scalar(1e-5);

  /// weight: out x in x kernel, bias: out.
  static LayerParams conv1d(std::string name, Index out_channels, Index in_channels, Index kernel) {
    LayerParams p;
    p.name = std::move(name);
    p.kind = LayerKind::conv1d;
    p.weight = Tensor<Scalar>({out_channels, in_channels, kernel});
    p.bias = Tensor<Scalar>({out_channels});
    return p;
  }

  /// gamma = 1, beta = 0, running mean 0, running var 1.
  static LayerParams batchnorm1d(std::string name, Index channels) {
    LayerParams p;
    p.name = std::move(name);
    p.kind = LayerKind::batchnorm1d;
    p.weight = Tensor<Scalar>::constant({channels}, Scalar(1));
    p.bias = Tensor<Scalar>({channels});
    p.running_mean = Tensor<Scalar>({channels});
    p.running_var = Tensor<Scalar>::constant({channels}, Scalar(1));
    return p;
  }

  /// weight: out x in, bias: out.
  static LayerParams linear(std::string name, Index out_features, Index in_features) {
    LayerParams p;
    p.name = std::move(name);
    p.kind = LayerKind::linear;
    p.weight = Tensor<Scalar>({out_features, in_features});
    p.bias = Tensor<Scalar>({out_features});
    return p;
  }

  Index trainable_count() const { return weight.size() + bias.size(); }

  template <typename Other>
  LayerParams<Other> cast() const {
    LayerParams<Other> p;
    p.name = name;
    p.kind = kind;
    p.weight = weight.template cast<Other>();
    p.bias = bias.template cast<Other>();
    p.running_mean = running_mean.template cast<Other>();
    p.running_var = running_var.template cast<Other>();
    p.momentum = static_cast<Other>(momentum);
    p.epsilon = static_cast<Other>(epsilon);
    return p;
  }
};

}  // namespace tssd::nn
