#pragma once

#include "tssd/tape.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace tssd {

/// A differentiable computation to verify. `build` records it on a fresh
/// tape, registering every tensor in `wrt` as a parameter; its result may
/// have any shape. `owner` keeps the tensors (and anything else) alive.
struct GradCheckProblem {
  std::vector<TensorD*> wrt;
  std::function<Var(Tape<double>&)> build;
  std::shared_ptr<void> owner;
};

using GradCheckSampler = std::function<GradCheckProblem(std::mt19937_64&)>;

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  /// Samples whose forward pass comes closer than this to a ReLU or pooling
  /// kink are redrawn.
  double kink_margin = 1e-3;
  int max_attempts = 2000;
};

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  int attempts = 0;
  bool passed = false;
  std::string note;

  /// `<name> max_rel_err=<e> coords=<n> PASS|FAIL`
  std::string line() const;
};

/// Compares reverse-mode gradients with central differences on every
/// coordinate of every `wrt` tensor. A random projection reduces non-scalar
/// outputs to a scalar. The error per coordinate is
/// |g_an - g_fd| / max(|g_an|, |g_fd|, 1e-8); the report holds the maximum.
GradCheckReport grad_check(const std::string& name, const GradCheckSampler& sample, std::uint64_t seed,
                           const GradCheckOptions& options = {});

/// Every layer kind, the losses, and a two-block network of each family.
std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed = 1, const GradCheckOptions& options = {});

}  // namespace tssd
