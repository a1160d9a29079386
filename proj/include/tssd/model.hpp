#pragma once

#include "tssd/model_config.hpp"
#include "tssd/nn.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tssd {

using nn::Mode;

/// Res-TSSDNet / Inc-TSSDNet: layer parameters plus the wiring that the
/// config implies. A value type; copies are independent.
///
/// Res block (C_in -> C):
///   conv3 -> BN -> ReLU -> conv3 -> BN -> ReLU -> conv3 -> BN  (+ skip) -> ReLU
/// where skip is conv1 -> BN when `use_skip`, the identity when C_in == C,
/// and absent otherwise.
///
/// Inc block (C_in -> branches * C): branch b is conv3 with dilation d_b ->
/// BN -> ReLU; branch outputs are concatenated along channels.
template <typename Scalar>
class Model {
 public:
  using Layer = nn::LayerParams<Scalar>;

  explicit Model(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    build();
  }

  const ModelConfig& config() const { return config_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Trainable tensors in a fixed order (per layer: weight, bias).
  std::vector<Tensor<Scalar>*> parameters() {
    std::vector<Tensor<Scalar>*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for conv and linear weights and
  /// biases; batchnorm reset to the identity with fresh running statistics.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& l : layers_) {
      if (l.kind == nn::LayerKind::batchnorm1d) {
        l.weight.values().setOnes();
        l.bias.values().setZero();
        l.running_mean.values().setZero();
        l.running_var.values().setOnes();
        continue;
      }
      const Index fan_in = l.weight.size() / l.weight.dim(0);
      std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(double(fan_in)), 1.0 / std::sqrt(double(fan_in)));
      for (Index i = 0; i < l.weight.size(); ++i) l.weight[i] = static_cast<Scalar>(dist(rng));
      for (Index i = 0; i < l.bias.size(); ++i) l.bias[i] = static_cast<Scalar>(dist(rng));
    }
  }

  /// Records the network on `tape`. `input` is B x 1 x input_length; the
  /// result is B x 2 logits (index 0 spoof, 1 bona fide). When `trace` is
  /// given it receives the time length after the input and after each pool.
  Var forward(Tape<Scalar>& tape, Var input, Mode mode, std::vector<Index>* trace = nullptr) {
    const Shape& shape = tape.shape(input);
    if (shape.size() != 3 || shape[1] != 1 || shape[2] != config_.input_length) {
      throw std::invalid_argument("forward: expected B x 1 x " + std::to_string(config_.input_length) + " input, got " +
                                  shape_string(shape));
    }
    auto note = [&](Var v) {
      if (trace) trace->push_back(tape.shape(v)[2]);
    };
    if (trace) trace->clear();
    note(input);

    Var x = nn::conv1d(tape, input, layers_[stem_conv_], 1);
    x = nn::relu(tape, nn::batchnorm1d(tape, x, layers_[stem_bn_], mode));
    x = nn::maxpool1d(tape, x, kPoolWindow);
    note(x);

    for (std::size_t m = 0; m < blocks_.size(); ++m) {
      x = config_.family == Family::res ? res_block(tape, x, blocks_[m], mode) : inc_block(tape, x, blocks_[m], mode);
      if (m + 1 < blocks_.size()) {
        x = nn::maxpool1d(tape, x, kPoolWindow);
        note(x);
      }
    }

    x = nn::global_maxpool(tape, x);
    x = nn::relu(tape, nn::linear(tape, x, layers_[fc_[0]]));
    x = nn::relu(tape, nn::linear(tape, x, layers_[fc_[1]]));
    return nn::linear(tape, x, layers_[fc_[2]]);
  }

  /// Logits for a batch without keeping the tape around.
  Tensor<Scalar> forward(const Tensor<Scalar>& batch, Mode mode) {
    Tape<Scalar> tape;
    const Var out = forward(tape, tape.constant(batch), mode);
    return tape.value(out);
  }

  template <typename Other>
  Model<Other> cast() const {
    Model<Other> m(config_);
    for (std::size_t i = 0; i < layers_.size(); ++i) m.layers()[i] = layers_[i].template cast<Other>();
    return m;
  }

 private:
  struct Block {
    // Res: three main convs/BNs. Inc: one conv/BN per branch.
    std::vector<std::size_t> conv;
    std::vector<std::size_t> bn;
    std::vector<Index> dilation;
    bool has_skip_conv = false;
    bool identity_skip = false;
    std::size_t skip_conv = 0;
    std::size_t skip_bn = 0;
  };

  std::size_t add_layer(Layer layer) {
    layers_.push_back(std::move(layer));
    return layers_.size() - 1;
  }

  void build() {
    stem_conv_ = add_layer(Layer::conv1d("stem.conv", config_.stem_channels, 1, config_.stem_kernel));
    stem_bn_ = add_layer(Layer::batchnorm1d("stem.bn", config_.stem_channels));
    Index in = config_.stem_channels;
    for (int m = 0; m < config_.blocks; ++m) {
      const std::string prefix = "block" + std::to_string(m + 1);
      const Index c = config_.channels[static_cast<std::size_t>(m)];
      Block block;
      if (config_.family == Family::res) {
        for (int i = 0; i < 3; ++i) {
          const std::string n = std::to_string(i + 1);
          block.conv.push_back(add_layer(Layer::conv1d(prefix + ".conv" + n, c, i == 0 ? in : c, 3)));
          block.bn.push_back(add_layer(Layer::batchnorm1d(prefix + ".bn" + n, c)));
          block.dilation.push_back(1);
        }
        if (config_.use_skip) {
          block.has_skip_conv = true;
          block.skip_conv = add_layer(Layer::conv1d(prefix + ".skip.conv", c, in, 1));
          block.skip_bn = add_layer(Layer::batchnorm1d(prefix + ".skip.bn", c));
        } else {
          block.identity_skip = in == c;
        }
        in = c;
      } else {
        for (int b = 0; b < config_.branches; ++b) {
          const std::string branch = prefix + ".branch" + std::to_string(b + 1);
          block.conv.push_back(add_layer(Layer::conv1d(branch + ".conv", c, in, 3)));
          block.bn.push_back(add_layer(Layer::batchnorm1d(branch + ".bn", c)));
          block.dilation.push_back(config_.dilations[static_cast<std::size_t>(b)]);
        }
        in = c * config_.branches;
      }
      blocks_.push_back(std::move(block));
    }
    fc_[0] = add_layer(Layer::linear("fc1", config_.fc[0], in));
    fc_[1] = add_layer(Layer::linear("fc2", config_.fc[1], config_.fc[0]));
    fc_[2] = add_layer(Layer::linear("fc3", 2, config_.fc[1]));
  }

  Var res_block(Tape<Scalar>& tape, Var input, const Block& block, Mode mode) {
    Var x = input;
    for (std::size_t i = 0; i < 3; ++i) {
      x = nn::conv1d(tape, x, layers_[block.conv[i]], 1);
      x = nn::batchnorm1d(tape, x, layers_[block.bn[i]], mode);
      if (i < 2) x = nn::relu(tape, x);
    }
    if (block.has_skip_conv) {
      Var skip = nn::conv1d(tape, input, layers_[block.skip_conv], 1);
      skip = nn::batchnorm1d(tape, skip, layers_[block.skip_bn], mode);
      x = nn::add(tape, x, skip);
    } else if (block.identity_skip) {
      x = nn::add(tape, x, input);
    }
    return nn::relu(tape, x);
  }

  Var inc_block(Tape<Scalar>& tape, Var input, const Block& block, Mode mode) {
    std::vector<Var> branches;
    for (std::size_t b = 0; b < block.conv.size(); ++b) {
      Var x = nn::conv1d(tape, input, layers_[block.conv[b]], block.dilation[b]);
      x = nn::batchnorm1d(tape, x, layers_[block.bn[b]], mode);
      branches.push_back(nn::relu(tape, x));
    }
    return nn::concat_channels(tape, branches);
  }

  ModelConfig config_;
  std::vector<Layer> layers_;
  std::vector<Block> blocks_;
  std::size_t stem_conv_ = 0;
  std::size_t stem_bn_ = 0;
  std::size_t fc_[3] = {0, 0, 0};
};

template <typename Scalar = float>
Model<Scalar> build_res_tssdnet(const ModelConfig& config) {
  if (config.family != Family::res) throw std::invalid_argument("build_res_tssdnet: config family is not res");
  return Model<Scalar>(config);
}

template <typename Scalar = float>
Model<Scalar> build_inc_tssdnet(const ModelConfig& config) {
  if (config.family != Family::inc) throw std::invalid_argument("build_inc_tssdnet: config family is not inc");
  return Model<Scalar>(config);
}

/// Weights, biases and BN scale/shift; running statistics are not counted.
template <typename Scalar>
std::int64_t count_parameters(const Model<Scalar>& model) {
  std::int64_t n = 0;
  for (const auto& l : model.layers()) n += l.trainable_count();
  return n;
}

extern template class Model<float>;
extern template class Model<double>;

}  // namespace tssd
