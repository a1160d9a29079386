#pragma once

#include "tssd/adam.hpp"
#include "tssd/dataset.hpp"
#include "tssd/losses.hpp"
#include "tssd/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace tssd {

enum class LossMode { wce, mixup };

struct TrainConfig {
  int batch_size = 32;
  int max_epochs = 100;
  double base_lr = 1e-3;
  double lr_decay = 0.95;
  LossMode loss = LossMode::wce;
  double mixup_alpha = 1.0;
  /// Batch size used when scoring the dev set.
  int eval_batch_size = 32;

  void validate() const;
  /// "wce" or "ce-mixup alpha=<a>".
  std::string loss_description() const;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double dev_eer = 0;
  int skipped_steps = 0;

  /// `epoch=<n> lr=<float> loss=<float> dev_eer=<float>`
  std::string line() const;
};

struct FitResult {
  Model<float> best_model;
  AdamState<float> best_optimizer;
  int best_epoch = 0;
  double best_dev_eer = 1.0;
  std::vector<EpochLog> log;
};

/// Eval-mode scores (logit difference) for every row, in dataset order.
std::vector<double> score_dataset(Model<float>& model, const Dataset& data, int batch_size = 32);

/// Dev-set EER of the current model.
double dev_eer(Model<float>& model, const Dataset& dev, int batch_size = 32);

/// Trains for `max_epochs` epochs and keeps the epoch with the lowest dev EER
/// (earliest on ties). Each epoch shuffles the training rows, runs one Adam
/// step per batch at lr = base_lr * decay^epoch, then scores the dev set.
/// All randomness (shuffles, mixup lambdas and pairings) comes from `rng`.
/// Log lines are written to `log` when given.
FitResult fit(Model<float> model, const Dataset& train, const Dataset& dev, const TrainConfig& config,
              std::mt19937_64& rng, std::ostream* log = nullptr);

}  // namespace tssd
