#include "tssd/trainer.hpp"

#include "tssd/metrics.hpp"
#include "tssd/mixup.hpp"

#include <charconv>
#include <iostream>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace tssd {

namespace {

std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be at least 1");
  if (eval_batch_size < 1) throw std::invalid_argument("train config: eval batch size must be at least 1");
  if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs must be at least 1");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("train config: lr_decay must be in (0, 1]");
  if (!(base_lr > 0.0)) throw std::invalid_argument("train config: learning rate must be positive");
  if (loss == LossMode::mixup && !(mixup_alpha > 0.0)) {
    throw std::invalid_argument("train config: mixup alpha must be positive");
  }
}

std::string TrainConfig::loss_description() const {
  return loss == LossMode::wce ? "wce" : "ce-mixup alpha=" + shortest(mixup_alpha);
}

std::string EpochLog::line() const {
  return "epoch=" + std::to_string(epoch) + " lr=" + shortest(lr) + " loss=" + shortest(loss) +
         " dev_eer=" + shortest(dev_eer);
}

std::vector<double> score_dataset(Model<float>& model, const Dataset& data, int batch_size) {
  std::vector<double> scores;
  scores.reserve(data.size());
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    rows.resize(std::min(data.size() - start, static_cast<std::size_t>(batch_size)));
    std::iota(rows.begin(), rows.end(), start);
    const TensorF logits = model.forward(data.batch(rows), Mode::eval);
    for (Index i = 0; i < logits.dim(0); ++i) {
      const float pair[2] = {logits.at(i, 0), logits.at(i, 1)};
      scores.push_back(score_from_logits(std::span<const float>(pair)));
    }
  }
  return scores;
}

double dev_eer(Model<float>& model, const Dataset& dev, int batch_size) {
  const auto scores = score_dataset(model, dev, batch_size);
  std::vector<double> bona, spoof;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (dev.labels[i] == class_index(Label::bonafide)) bona.push_back(scores[i]);
    if (dev.labels[i] == class_index(Label::spoof)) spoof.push_back(scores[i]);
  }
  return compute_eer(bona, spoof).eer;
}

FitResult fit(Model<float> model, const Dataset& train, const Dataset& dev, const TrainConfig& config,
              std::mt19937_64& rng, std::ostream* log) {
  config.validate();
  if (train.size() == 0) throw std::invalid_argument("fit: empty training set");
  if (dev.size() == 0) throw std::invalid_argument("fit: empty dev set");
  const auto [dev_spoof, dev_bona] = dev.label_counts();
  if (dev_spoof == 0 || dev_bona == 0) throw std::invalid_argument("fit: dev set needs both classes for EER");
  if (train.length != model.config().input_length || dev.length != model.config().input_length) {
    throw std::invalid_argument("fit: data length does not match the model input length");
  }
  const auto [n_spoof, n_bona] = train.label_counts();
  if (n_spoof + n_bona != static_cast<std::int64_t>(train.size())) {
    throw std::invalid_argument("fit: training set contains unlabeled utterances");
  }
  const ClassWeights weights = class_weights(n_spoof, n_bona);

  AdamState<float> optimizer;
  optimizer.base_lr = config.base_lr;
  FitResult result{model, optimizer, 0, 2.0, {}};
  auto params = model.parameters();

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr = decay_lr(config.base_lr, epoch, config.lr_decay);
    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.lr = lr;
    double loss_sum = 0;
    std::size_t loss_count = 0;

    for (const auto& rows : shuffled_batches(train.size(), static_cast<std::size_t>(config.batch_size), rng())) {
      TensorF input = train.batch(rows);
      std::vector<int> labels = train.labels_of(rows);
      model.zero_grad();
      try {
        Tape<float> tape;
        Var loss;
        if (config.loss == LossMode::mixup) {
          const double lambda = sample_beta(config.mixup_alpha, rng);
          const auto perm = random_permutation(rows.size(), rng);
          MixupBatch mixed = mixup_batch(input, labels, lambda, perm);
          const Var x = tape.constant(std::move(mixed.input));
          const Var lp = nn::log_softmax(tape, model.forward(tape, x, Mode::train));
          loss = mixup_loss(tape, lp, mixed.labels_a, mixed.labels_b, mixed.lambda);
        } else {
          const Var x = tape.constant(std::move(input));
          const Var lp = nn::log_softmax(tape, model.forward(tape, x, Mode::train));
          loss = wce_loss(tape, lp, labels, weights);
        }
        const double value = tape.value(loss)[0];
        tape.backward(loss);
        adam_step<float>(params, optimizer, lr);
        loss_sum += value * static_cast<double>(rows.size());
        loss_count += rows.size();
      } catch (const NonFiniteError& e) {
        ++entry.skipped_steps;
        std::cerr << "epoch " << epoch + 1 << ": skipped step: " << e.what() << '\n';
      }
    }

    entry.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    entry.dev_eer = dev_eer(model, dev, config.eval_batch_size);
    result.log.push_back(entry);
    if (log) *log << entry.line() << std::endl;
    if (entry.dev_eer < result.best_dev_eer) {
      result.best_dev_eer = entry.dev_eer;
      result.best_epoch = entry.epoch;
      result.best_model = model;
      result.best_optimizer = optimizer;
    }
  }
  return result;
}

}  // namespace tssd
