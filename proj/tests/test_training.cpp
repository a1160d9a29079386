#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"

#include "tssd/adam.hpp"
#include "tssd/checkpoint.hpp"
#include "tssd/losses.hpp"
#include "tssd/mixup.hpp"
#include "tssd/trainer.hpp"

#include <cmath>
#include <sstream>

using namespace tssd;
using tssd::test::random_tensor;

namespace {

double loss_value(const TensorD& logprobs, const std::function<Var(Tape<double>&, Var)>& loss) {
  Tape<double> tape;
  return tape.value(loss(tape, tape.constant(logprobs)))[0];
}

TensorD random_logprobs(Index batch, std::mt19937_64& rng) {
  return nn::log_softmax(random_tensor<double>({batch, 2}, rng, -4, 4));
}

std::vector<int> random_labels(std::size_t n, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  std::vector<int> y(n);
  for (auto& v : y) v = coin(rng) ? 1 : 0;
  return y;
}

ModelConfig toy_config() {
  ModelConfig c = ModelConfig::res(2);
  c.stem_channels = 4;
  c.channels = {4, 4};
  c.fc = {8, 8};
  c.input_length = 64;
  return c;
}

// Bona fide: noisy sine; spoof: the same hard-clipped to a third of its peak.
Dataset toy_dataset(int per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(0.05, 0.3), phase(0, 6.28);
  std::normal_distribution<double> noise(0, 0.05);
  Dataset d;
  d.length = 64;
  for (int i = 0; i < 2 * per_class; ++i) {
    const bool bona = i % 2 == 0;
    const double f = freq(rng), p = phase(rng);
    for (Index t = 0; t < 64; ++t) {
      double s = 0.8 * std::sin(f * double(t) + p) + noise(rng);
      if (!bona) s = std::clamp(s, -0.27, 0.27);
      d.samples.push_back(static_cast<float>(s));
    }
    d.ids.push_back("T" + std::to_string(i));
    d.labels.push_back(bona ? 1 : 0);
  }
  return d;
}

}  // namespace

TEST_CASE("class weights") {
  CHECK(class_weights(100, 100)[0] == 1.0);
  CHECK(class_weights(100, 100)[1] == 1.0);
  CHECK(class_weights(100, 300)[0] == 2.0);
  CHECK(class_weights(100, 300)[1] == doctest::Approx(2.0 / 3.0));
  CHECK(class_weights(1, 9)[0] == 5.0);
  CHECK(class_weights(1, 9)[1] == doctest::Approx(5.0 / 9.0));
  CHECK_THROWS(class_weights(0, 9));
  CHECK_THROWS(class_weights(4, 0));
}

TEST_CASE("weighted cross entropy examples") {
  const std::vector<int> y1{1};
  TensorD perfect({2, 2});
  perfect.at(0, 0) = -1e9 + 1;  // exp underflows: prob of the true class is 1
  perfect.at(1, 1) = -1e9 + 1;
  const std::vector<int> labels{1, 0};
  CHECK(loss_value(perfect, [&](Tape<double>& t, Var v) { return wce_loss(t, v, labels, ClassWeights{2, 3}); }) ==
        0.0);

  TensorD z({1, 2});
  z[0] = std::log(0.25);
  z[1] = std::log(0.75);
  const double single = loss_value(z, [&](Tape<double>& t, Var v) { return wce_loss(t, v, y1, ClassWeights{1, 2}); });
  CHECK(single == doctest::Approx(0.5754).epsilon(1e-4));
  CHECK(single == doctest::Approx(-2 * std::log(0.75)).epsilon(1e-14));

  const std::vector<int> bad{2};
  CHECK_THROWS(loss_value(z, [&](Tape<double>& t, Var v) { return wce_loss(t, v, bad, ClassWeights{1, 1}); }));
  const std::vector<int> short_labels{};
  CHECK_THROWS(loss_value(z, [&](Tape<double>& t, Var v) { return ce_loss(t, v, short_labels); }));
}

TEST_CASE("weighted cross entropy with unit weights equals cross entropy") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const TensorD logits = random_tensor<double>({1 + trial % 40, 2}, rng, -6, 6);
    const TensorD lp = nn::log_softmax(logits);
    const auto y = random_labels(static_cast<std::size_t>(lp.dim(0)), rng);
    const double w = loss_value(lp, [&](Tape<double>& t, Var v) { return wce_loss(t, v, y, ClassWeights{1, 1}); });
    const double c = loss_value(lp, [&](Tape<double>& t, Var v) { return ce_loss(t, v, y); });
    CHECK(w == c);
    CHECK(std::abs(w - test::direct_cross_entropy(logits, y)) <= 1e-12);
  }
}

TEST_CASE("sample_beta") {
  std::mt19937_64 rng(2);
  const int n = 100000;
  auto stats = [&](double alpha) {
    double sum = 0;
    int middle = 0;
    std::array<int, 10> bins{};
    for (int i = 0; i < n; ++i) {
      const double l = sample_beta(alpha, rng);
      REQUIRE(l > 0.0);
      REQUIRE(l < 1.0);
      sum += l;
      middle += (l > 0.4 && l < 0.6);
      ++bins[static_cast<std::size_t>(l * 10)];
    }
    return std::tuple{sum / n, double(middle) / n, bins};
  };
  const auto [mean1, mid1, bins1] = stats(1.0);
  CHECK(std::abs(mean1 - 0.5) < 0.01);
  for (int b : bins1) CHECK(std::abs(b / double(n) - 0.1) < 0.01);
  for (double alpha : {0.1, 0.5, 2.0, 5.0}) {
    CHECK(std::abs(std::get<0>(stats(alpha)) - 0.5) < 0.01);
  }
  CHECK(std::get<1>(stats(0.1)) < std::get<1>(stats(5.0)));
  CHECK_THROWS(sample_beta(0.0, rng));
  CHECK_THROWS(sample_beta(-1.0, rng));

  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 100; ++i) CHECK(sample_beta(0.3, a) == sample_beta(0.3, b));
}

TEST_CASE("mixup_batch") {
  std::mt19937_64 rng(3);
  const TensorF x = random_tensor({4, 1, 6}, rng);
  const std::vector<int> y{0, 1, 1, 0};
  const std::vector<std::size_t> perm{2, 0, 3, 1};

  const auto one = mixup_batch(x, y, 1.0, perm);
  CHECK(one.input == x);
  const auto zero = mixup_batch(x, y, 0.0, perm);
  for (Index i = 0; i < 4; ++i) CHECK(zero.input.item(i) == x.item(static_cast<Index>(perm[std::size_t(i)])));
  CHECK(zero.labels_a == y);
  CHECK(zero.labels_b == std::vector<int>{1, 0, 0, 1});

  TensorF pair({2, 1, 1});
  pair[0] = 0.2f;
  pair[1] = 0.8f;
  const std::vector<int> y2{0, 1};
  const std::vector<std::size_t> swap{1, 0};
  CHECK(mixup_batch(pair, y2, 0.5, swap).input[0] == doctest::Approx(0.5));

  CHECK_THROWS(mixup_batch(x, y, 0.5, std::vector<std::size_t>{0, 1, 2}));
  CHECK_THROWS(mixup_batch(x, y, 0.5, std::vector<std::size_t>{0, 1, 1, 2}));
  CHECK_THROWS(mixup_batch(x, y, 1.5, perm));

  auto p = random_permutation(50, rng);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(p[i] == i);
}

TEST_CASE("mixup loss identities") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const TensorD lp = random_logprobs(1 + trial % 16, rng);
    const auto n = static_cast<std::size_t>(lp.dim(0));
    const auto a = random_labels(n, rng), b = random_labels(n, rng);
    const double ce_a = loss_value(lp, [&](Tape<double>& t, Var v) { return ce_loss(t, v, a); });
    const double ce_b = loss_value(lp, [&](Tape<double>& t, Var v) { return ce_loss(t, v, b); });
    CHECK(loss_value(lp, [&](Tape<double>& t, Var v) { return mixup_loss(t, v, a, b, 1.0); }) == ce_a);
    CHECK(loss_value(lp, [&](Tape<double>& t, Var v) { return mixup_loss(t, v, a, b, 0.0); }) == ce_b);
    CHECK(loss_value(lp, [&](Tape<double>& t, Var v) { return mixup_loss(t, v, a, a, 0.37); }) ==
          doctest::Approx(ce_a).epsilon(1e-14));
    const double lambda = std::uniform_real_distribution<double>(0, 1)(rng);
    CHECK(loss_value(lp, [&](Tape<double>& t, Var v) { return mixup_loss(t, v, a, b, lambda); }) ==
          loss_value(lp, [&](Tape<double>& t, Var v) { return mixup_loss(t, v, b, a, 1.0 - lambda); }));
  }

  TensorD lp({1, 2});
  lp[0] = -1.0;
  lp[1] = -2.0;
  const std::vector<int> a{0}, b{1};
  CHECK(loss_value(lp, [&](Tape<double>& t, Var v) { return mixup_loss(t, v, a, b, 0.3); }) ==
        doctest::Approx(1.7).epsilon(1e-15));
  CHECK_THROWS(loss_value(lp, [&](Tape<double>& t, Var v) { return mixup_loss(t, v, a, b, -0.1); }));
  CHECK_THROWS(loss_value(lp, [&](Tape<double>& t, Var v) { return mixup_loss(t, v, a, b, 1.1); }));
}

TEST_CASE("mixup with tiny alpha behaves like plain cross entropy") {
  Model<float> model(toy_config());
  model.initialize(5);
  const Dataset data = toy_dataset(16, 5);
  std::mt19937_64 rng(5);
  double total = 0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<std::size_t> rows(8);
    for (std::size_t i = 0; i < 8; ++i) rows[i] = (trial * 8 + i) % data.size();
    const TensorF x = data.batch(rows);
    const auto y = data.labels_of(rows);
    const double lambda = sample_beta(1e-3, rng);
    const auto perm = random_permutation(8, rng);
    const MixupBatch mixed = mixup_batch(x, y, lambda, perm);

    Tape<float> t1;
    const Var lp1 = nn::log_softmax(t1, model.forward(t1, t1.constant(mixed.input), Mode::eval));
    const double mix = t1.value(mixup_loss(t1, lp1, mixed.labels_a, mixed.labels_b, lambda))[0];

    // The dominant partner is what mixup degenerates to as alpha -> 0.
    TensorF dominant = x;
    std::vector<int> y_dom = y;
    if (lambda < 0.5) {
      for (std::size_t i = 0; i < 8; ++i) {
        dominant.item(Index(i)) = x.item(Index(perm[i]));
        y_dom[i] = y[perm[i]];
      }
    }
    Tape<float> t2;
    const Var lp2 = nn::log_softmax(t2, model.forward(t2, t2.constant(dominant), Mode::eval));
    const double plain = t2.value(ce_loss(t2, lp2, y_dom))[0];
    total += std::abs(mix - plain);
  }
  CHECK(total / trials < 1e-3);
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    TensorF p = TensorF::constant({3}, 0.7f);
    p.zero_grad();
    TensorF* params[] = {&p};
    AdamState<float> s;
    adam_step<float>(params, s, 1e-3);
    CHECK((p.values() == 0.7f).all());
    CHECK(s.step == 1);
  }
  SUBCASE("first step moves by the learning rate") {
    TensorD p = TensorD::constant({1}, 0.0);
    p.zero_grad();
    p.grad()[0] = 1.0;
    TensorD* params[] = {&p};
    AdamState<double> s;
    adam_step<double>(params, s, 1e-3);
    CHECK(p[0] == doctest::Approx(-1e-3 / (1 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("deterministic trajectories") {
    std::mt19937_64 rng(6);
    TensorF a = random_tensor({5}, rng), b = a;
    AdamState<float> sa, sb;
    for (int i = 0; i < 20; ++i) {
      const TensorF g = random_tensor({5}, rng);
      a.zero_grad();
      b.zero_grad();
      a.grad() = g.values();
      b.grad() = g.values();
      TensorF* pa[] = {&a};
      TensorF* pb[] = {&b};
      adam_step<float>(pa, sa, decay_lr(1e-3, i));
      adam_step<float>(pb, sb, decay_lr(1e-3, i));
    }
    CHECK(a == b);
    CHECK(sa == sb);
    CHECK((sa.v[0] >= 0).all());
  }
  SUBCASE("non-finite gradient aborts without side effects") {
    TensorF p = TensorF::constant({2}, 1.0f);
    p.zero_grad();
    p.grad()[0] = 0.5f;
    TensorF* params[] = {&p};
    AdamState<float> s;
    adam_step<float>(params, s, 1e-3);
    const TensorF before = p;
    const AdamState<float> state_before = s;
    p.grad()[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(adam_step<float>(params, s, 1e-3), NonFiniteError);
    CHECK(p == before);
    CHECK(s == state_before);
  }
  SUBCASE("shape mismatch") {
    TensorF p({3}), q({4});
    p.zero_grad();
    q.zero_grad();
    TensorF* one[] = {&p};
    TensorF* two[] = {&p, &q};
    AdamState<float> s;
    adam_step<float>(one, s, 1e-3);
    CHECK_THROWS(adam_step<float>(two, s, 1e-3));
  }
}

TEST_CASE("learning rate decay") {
  CHECK(decay_lr(1e-3, 0) == 1e-3);
  CHECK(decay_lr(1e-3, 1) == doctest::Approx(9.5e-4).epsilon(1e-14));
  CHECK(decay_lr(1e-3, 14) == doctest::Approx(4.877e-4).epsilon(1e-4));
  for (int e = 0; e < 100; ++e) CHECK(decay_lr(1e-3, e + 1) < decay_lr(1e-3, e));
  CHECK_THROWS(decay_lr(1e-3, -1));
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.lr_decay = 0;
  CHECK_THROWS(c.validate());
  c.lr_decay = 1.0;
  CHECK_NOTHROW(c.validate());
  c.loss = LossMode::mixup;
  c.mixup_alpha = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("epoch log line") {
  EpochLog e;
  e.epoch = 3;
  e.lr = 9.025e-4;
  e.loss = 0.25;
  e.dev_eer = 0.125;
  CHECK(e.line() == "epoch=3 lr=0.0009025 loss=0.25 dev_eer=0.125");
}

TEST_CASE("fit learns a toy problem and is deterministic") {
  const Dataset train = toy_dataset(24, 7), dev = toy_dataset(12, 8);
  TrainConfig cfg;
  cfg.max_epochs = 12;
  cfg.batch_size = 8;
  cfg.base_lr = 1e-2;
  auto run = [&](std::uint64_t seed, std::string& log_text) {
    Model<float> model(toy_config());
    std::mt19937_64 rng(seed);
    model.initialize(rng());
    std::ostringstream log;
    FitResult r = fit(std::move(model), train, dev, cfg, rng, &log);
    log_text = log.str();
    return r;
  };
  std::string log_a, log_b, log_c;
  FitResult a = run(1, log_a);
  const FitResult b = run(1, log_b);
  run(2, log_c);
  CHECK(log_a == log_b);
  CHECK(log_a != log_c);
  CHECK(serialize_checkpoint(a.best_model, &a.best_optimizer) == serialize_checkpoint(b.best_model, &b.best_optimizer));

  REQUIRE(a.log.size() == 12);
  CHECK(a.log[0].lr == 1e-2);
  for (std::size_t e = 1; e < a.log.size(); ++e) CHECK(a.log[e].lr < a.log[e - 1].lr);
  double best = 1;
  int best_epoch = 0;
  for (const auto& e : a.log) {
    if (e.dev_eer < best) best = e.dev_eer, best_epoch = e.epoch;
  }
  CHECK(a.best_epoch == best_epoch);
  CHECK(a.best_dev_eer == best);
  CHECK(a.best_dev_eer <= 0.1);
  CHECK(dev_eer(a.best_model, dev) == a.best_dev_eer);
  CHECK(log_a.find("epoch=1 lr=0.01 loss=") == 0);
}

TEST_CASE("fit with mixup runs and logs") {
  const Dataset train = toy_dataset(8, 9), dev = toy_dataset(4, 10);
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.batch_size = 4;
  cfg.loss = LossMode::mixup;
  cfg.mixup_alpha = 0.5;
  Model<float> model(toy_config());
  model.initialize(1);
  std::mt19937_64 rng(1);
  const FitResult r = fit(std::move(model), train, dev, cfg, rng);
  CHECK(r.log.size() == 2);
  CHECK(std::isfinite(r.log[1].loss));
}

TEST_CASE("fit input errors") {
  const Dataset train = toy_dataset(4, 1);
  TrainConfig cfg;
  cfg.max_epochs = 1;
  std::mt19937_64 rng(1);
  Dataset one_class = toy_dataset(4, 2);
  for (auto& l : one_class.labels) l = 1;
  CHECK_THROWS(fit(Model<float>(toy_config()), train, one_class, cfg, rng));
  CHECK_THROWS(fit(Model<float>(toy_config()), Dataset{}, train, cfg, rng));
  CHECK_THROWS(fit(Model<float>(toy_config()), train, Dataset{}, cfg, rng));
  Dataset unlabeled = train;
  unlabeled.labels[0] = -1;
  CHECK_THROWS(fit(Model<float>(toy_config()), unlabeled, train, cfg, rng));
}
