#include "tssd/grad_check.hpp"

#include "tssd/losses.hpp"
#include "tssd/model.hpp"
#include "tssd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace tssd {

namespace {

TensorD random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  TensorD t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

double projected(const GradCheckProblem& problem, const TensorD& projection) {
  Tape<double> tape;
  const Var out = problem.build(tape);
  return (tape.value(out).values() * projection.values()).sum();
}

}  // namespace

std::string GradCheckReport::line() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-22s max_rel_err=%.3e coords=%zu %s", name.c_str(), max_rel_error, coordinates,
                passed ? "PASS" : "FAIL");
  std::string s = buf;
  if (!note.empty()) s += " (" + note + ")";
  return s;
}

GradCheckReport grad_check(const std::string& name, const GradCheckSampler& sample, std::uint64_t seed,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.name = name;
  std::mt19937_64 rng(seed);
  for (report.attempts = 1; report.attempts <= options.max_attempts; ++report.attempts) {
    GradCheckProblem problem = sample(rng);
    Tape<double> tape;
    const Var out = problem.build(tape);
    if (tape.kink_margin() < options.kink_margin) continue;

    const TensorD projection = random_tensor(tape.shape(out), rng);
    for (auto* t : problem.wrt) t->zero_grad();
    tape.backward(nn::weighted_sum(tape, out, projection));

    for (auto* t : problem.wrt) {
      const auto analytic = t->grad();
      for (Index i = 0; i < t->size(); ++i) {
        const double saved = (*t)[i];
        (*t)[i] = saved + options.step;
        const double up = projected(problem, projection);
        (*t)[i] = saved - options.step;
        const double down = projected(problem, projection);
        (*t)[i] = saved;
        const double fd = (up - down) / (2 * options.step);
        const double an = analytic[i];
        const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
        report.max_rel_error = std::max(report.max_rel_error, std::abs(an - fd) / denom);
        ++report.coordinates;
      }
    }
    report.passed = report.max_rel_error < options.tolerance;
    return report;
  }
  report.attempts = options.max_attempts;
  report.note = "no sample cleared the kink margin";
  return report;
}

namespace {

struct LayerCase {
  TensorD input;
  TensorD other;
  nn::LayerParams<double> params;
};

GradCheckSampler conv_case(Index kernel, Index dilation) {
  return [kernel, dilation](std::mt19937_64& rng) {
    auto c = std::make_shared<LayerCase>();
    c->input = random_tensor({2, 3, 19}, rng);
    c->params = nn::LayerParams<double>::conv1d("conv", 4, 3, kernel);
    c->params.weight = random_tensor(c->params.weight.shape(), rng);
    c->params.bias = random_tensor(c->params.bias.shape(), rng);
    return GradCheckProblem{{&c->input, &c->params.weight, &c->params.bias},
                            [c, dilation](Tape<double>& t) {
                              return nn::conv1d(t, t.parameter(c->input), c->params, dilation);
                            },
                            c};
  };
}

GradCheckSampler batchnorm_case(nn::Mode mode, bool rank3) {
  return [mode, rank3](std::mt19937_64& rng) {
    auto c = std::make_shared<LayerCase>();
    c->input = rank3 ? random_tensor({3, 4, 7}, rng) : random_tensor({6, 4}, rng);
    c->params = nn::LayerParams<double>::batchnorm1d("bn", 4);
    c->params.weight = random_tensor({4}, rng, 0.5, 2.0);
    c->params.bias = random_tensor({4}, rng);
    c->params.running_mean = random_tensor({4}, rng);
    c->params.running_var = random_tensor({4}, rng, 0.5, 2.0);
    return GradCheckProblem{{&c->input, &c->params.weight, &c->params.bias},
                            [c, mode](Tape<double>& t) {
                              // Running statistics must not drift between evaluations.
                              const auto mean = c->params.running_mean;
                              const auto var = c->params.running_var;
                              const Var out = nn::batchnorm1d(t, t.parameter(c->input), c->params, mode);
                              c->params.running_mean = mean;
                              c->params.running_var = var;
                              return out;
                            },
                            c};
  };
}

GradCheckSampler linear_case() {
  return [](std::mt19937_64& rng) {
    auto c = std::make_shared<LayerCase>();
    c->input = random_tensor({4, 3}, rng);
    c->params = nn::LayerParams<double>::linear("fc", 5, 3);
    c->params.weight = random_tensor({5, 3}, rng);
    c->params.bias = random_tensor({5}, rng);
    return GradCheckProblem{{&c->input, &c->params.weight, &c->params.bias},
                            [c](Tape<double>& t) { return nn::linear(t, t.parameter(c->input), c->params); }, c};
  };
}

template <typename Fn>
GradCheckSampler unary_case(Shape shape, Fn fn) {
  return [shape, fn](std::mt19937_64& rng) {
    auto c = std::make_shared<LayerCase>();
    c->input = random_tensor(shape, rng);
    return GradCheckProblem{{&c->input}, [c, fn](Tape<double>& t) { return fn(t, t.parameter(c->input)); }, c};
  };
}

GradCheckSampler binary_case(Shape a, Shape b, std::function<Var(Tape<double>&, Var, Var)> fn) {
  return [a, b, fn](std::mt19937_64& rng) {
    auto c = std::make_shared<LayerCase>();
    c->input = random_tensor(a, rng);
    c->other = random_tensor(b, rng);
    return GradCheckProblem{{&c->input, &c->other},
                            [c, fn](Tape<double>& t) { return fn(t, t.parameter(c->input), t.parameter(c->other)); },
                            c};
  };
}

struct NetworkCase {
  explicit NetworkCase(const ModelConfig& config) : model(config) {}
  Model<double> model;
  TensorD input;
  std::vector<int> labels;
};

GradCheckSampler network_case(ModelConfig config) {
  return [config](std::mt19937_64& rng) {
    auto c = std::make_shared<NetworkCase>(config);
    c->model.initialize(rng());
    c->input = random_tensor({2, 1, config.input_length}, rng);
    c->labels = {0, 1};
    GradCheckProblem p;
    // Every conv feeds a train-mode batchnorm, which cancels the conv bias:
    // the loss does not depend on it and its gradient is exactly zero.
    for (auto& l : c->model.layers()) {
      p.wrt.push_back(&l.weight);
      if (l.kind != nn::LayerKind::conv1d) p.wrt.push_back(&l.bias);
    }
    p.wrt.push_back(&c->input);
    p.build = [c](Tape<double>& t) {
      const Var logits = c->model.forward(t, t.parameter(c->input), Mode::train);
      return wce_loss(t, nn::log_softmax(t, logits), c->labels, ClassWeights{1.5, 0.75});
    };
    p.owner = c;
    return p;
  };
}

ModelConfig tiny(Family family) {
  ModelConfig c = family == Family::res ? ModelConfig::res(2) : ModelConfig::inc(2, 2);
  c.stem_channels = 3;
  c.stem_kernel = 7;
  c.channels = {3, 4};
  c.fc = {6, 5};
  c.input_length = 48;
  return c;
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed, const GradCheckOptions& options) {
  using nn::Mode;
  std::vector<GradCheckReport> reports;
  auto run = [&](const std::string& name, const GradCheckSampler& s) {
    reports.push_back(grad_check(name, s, seed++, options));
  };
  run("conv1d k=3 d=1", conv_case(3, 1));
  run("conv1d k=3 d=4", conv_case(3, 4));
  run("conv1d k=2 d=3", conv_case(2, 3));
  run("conv1d k=7 d=1", conv_case(7, 1));
  run("conv1d k=1", conv_case(1, 1));
  run("maxpool1d p=4", unary_case({2, 3, 18}, [](Tape<double>& t, Var x) { return nn::maxpool1d(t, x, 4); }));
  run("global_maxpool", unary_case({2, 3, 9}, [](Tape<double>& t, Var x) { return nn::global_maxpool(t, x); }));
  run("batchnorm1d train", batchnorm_case(Mode::train, true));
  run("batchnorm1d train BxC", batchnorm_case(Mode::train, false));
  run("batchnorm1d eval", batchnorm_case(Mode::eval, true));
  run("relu", unary_case({2, 3, 5}, [](Tape<double>& t, Var x) { return nn::relu(t, x); }));
  run("add", binary_case({2, 3, 5}, {2, 3, 5}, [](Tape<double>& t, Var a, Var b) { return nn::add(t, a, b); }));
  run("concat_channels", binary_case({2, 2, 5}, {2, 3, 5}, [](Tape<double>& t, Var a, Var b) {
        return nn::concat_channels(t, std::vector<Var>{a, b});
      }));
  run("linear", linear_case());
  run("log_softmax", unary_case({4, 2}, [](Tape<double>& t, Var x) { return nn::log_softmax(t, x); }));
  run("wce_loss", unary_case({4, 2}, [](Tape<double>& t, Var x) {
        static const std::vector<int> labels{0, 1, 1, 0};
        return wce_loss(t, nn::log_softmax(t, x), labels, ClassWeights{2.0, 2.0 / 3.0});
      }));
  run("mixup_loss", unary_case({4, 2}, [](Tape<double>& t, Var x) {
        static const std::vector<int> a{0, 1, 1, 0}, b{1, 1, 0, 0};
        return mixup_loss(t, nn::log_softmax(t, x), a, b, 0.3);
      }));
  run("res network M=2", network_case(tiny(Family::res)));
  ModelConfig no_skip = tiny(Family::res);
  no_skip.use_skip = false;
  no_skip.channels = {3, 3};
  run("res network M=2 no-skip", network_case(no_skip));
  run("inc network M=2", network_case(tiny(Family::inc)));
  return reports;
}

}  // namespace tssd
