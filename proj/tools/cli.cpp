#include "cli.hpp"

#include "CLI11.hpp"
#include "tssd/checkpoint.hpp"
#include "tssd/dataset.hpp"
#include "tssd/grad_check.hpp"
#include "tssd/metrics.hpp"
#include "tssd/model.hpp"
#include "tssd/synth.hpp"
#include "tssd/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

namespace tssd::cli {

namespace {

namespace fs = std::filesystem;

std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string percent(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * rate);
  return buf;
}

/// Writes everything to two streams.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == EOF) return !EOF;
    const bool ok = a_->sputc(static_cast<char>(c)) != EOF && (!b_ || b_->sputc(static_cast<char>(c)) != EOF);
    return ok ? c : EOF;
  }
  int sync() override { return (a_->pubsync() == 0 && (!b_ || b_->pubsync() == 0)) ? 0 : -1; }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

// `key = value` lines applied to options not given on the command line.
// Keys are option names without dashes; '_' and '-' are interchangeable.
void apply_config_file(CLI::App& app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open config file " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--config", path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return c == '_' ? '-' : std::tolower(c); });
    CLI::Option* opt = key == "config" ? nullptr : app.get_option_no_throw("--" + key);
    if (opt == nullptr) throw CLI::ValidationError("--config", path + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

struct ModelOptions {
  std::string family = "res";
  int blocks = 4;
  std::vector<int> channels;
  int branches = 4;
  std::vector<int> dilations;
  bool use_skip = true;
  std::vector<int> fc{64, 32};
  int stem_channels = 16;
  int stem_kernel = 7;
  long long input_length = kDefaultInputLength;

  void add_to(CLI::App& app) {
    app.add_option("--family", family, "Model family")->check(CLI::IsMember({"res", "inc"}))->capture_default_str();
    app.add_option("--m", blocks, "Number of stacked blocks (M)")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--channels", channels, "Per-block channels, comma separated")->delimiter(',');
    app.add_option("--branches", branches, "Inception branches")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--dilations", dilations, "Branch dilations (default 1,2,4,...)")->delimiter(',');
    app.add_flag("--use-skip,!--no-skip", use_skip, "1x1 residual skip paths (res)");
    app.add_option("--fc", fc, "Hidden widths of the head")->delimiter(',')->expected(2)->capture_default_str();
    app.add_option("--stem-channels", stem_channels)->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--stem-kernel", stem_kernel)->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--input-length", input_length, "Samples per example")->check(CLI::PositiveNumber)
        ->capture_default_str();
  }

  ModelConfig config() const {
    ModelConfig c = family == "res" ? ModelConfig::res(blocks, use_skip) : ModelConfig::inc(blocks, branches);
    if (!channels.empty()) c.channels = channels;
    if (!dilations.empty()) c.dilations = dilations;
    if (fc.size() != 2) throw CLI::ValidationError("--fc", "expects exactly two widths");
    c.fc = {fc[0], fc[1]};
    c.stem_channels = stem_channels;
    c.stem_kernel = stem_kernel;
    c.input_length = input_length;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw CLI::ValidationError("model", e.what());
    }
    return c;
  }
};

std::unordered_map<std::string, Label> protocol_labels(const std::string& path) {
  return label_map(parse_protocol(path));
}

fs::path default_root(const std::string& root, const std::string& protocol) {
  return root.empty() ? fs::path(protocol).parent_path() : fs::path(root);
}

int cmd_synth(int n, std::uint64_t seed, const std::string& out_dir, const SynthOptions& options, std::ostream& out) {
  const auto entries = synth_dataset(n, seed, out_dir, options);
  out << "wrote " << entries.size() << " utterances and " << (fs::path(out_dir) / "protocol.txt").string() << '\n';
  return kExitOk;
}

struct TrainOptions {
  ModelOptions model;
  std::string protocol, audio_root, dev_protocol, dev_audio_root;
  std::string checkpoint = "model.tssd";
  std::string log_path;
  int epochs = 100;
  int batch_size = 32;
  double lr = 1e-3;
  double lr_decay = 0.95;
  double mixup_alpha = 0.0;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainOptions& o, std::ostream& out) {
  const ModelConfig config = o.model.config();
  TrainConfig tc;
  tc.max_epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.eval_batch_size = o.batch_size;
  tc.base_lr = o.lr;
  tc.lr_decay = o.lr_decay;
  if (o.mixup_alpha > 0) {
    tc.loss = LossMode::mixup;
    tc.mixup_alpha = o.mixup_alpha;
  }
  tc.validate();

  const Dataset train = load_dataset(parse_protocol(o.protocol), default_root(o.audio_root, o.protocol),
                                     config.input_length);
  const Dataset dev = load_dataset(parse_protocol(o.dev_protocol), default_root(o.dev_audio_root, o.dev_protocol),
                                   config.input_length);

  std::ofstream log_file;
  if (!o.log_path.empty()) {
    log_file.open(o.log_path, std::ios::trunc);
    if (!log_file) throw std::runtime_error("cannot write log " + o.log_path);
  }
  TeeBuf tee(out.rdbuf(), log_file.is_open() ? log_file.rdbuf() : nullptr);
  std::ostream log(&tee);

  std::mt19937_64 rng(o.seed);
  Model<float> model(config);
  model.initialize(rng());
  const auto [n_spoof, n_bona] = train.label_counts();
  log << "train family=" << to_string(config.family) << " M=" << config.blocks
      << " channels=" << format_int_list(config.channels) << " params=" << count_parameters(model)
      << " loss=" << tc.loss_description() << " train=" << train.size() << " (spoof=" << n_spoof
      << " bonafide=" << n_bona << ") dev=" << dev.size() << " seed=" << o.seed << std::endl;

  FitResult result = fit(std::move(model), train, dev, tc, rng, &log);
  save_checkpoint(result.best_model, &result.best_optimizer, o.checkpoint);
  log << "best_epoch=" << result.best_epoch << " dev_eer=" << shortest(result.best_dev_eer)
      << " checkpoint=" << o.checkpoint << std::endl;
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& protocol, const std::string& audio_root,
             const std::string& scores_path, int batch_size, std::ostream& out) {
  Checkpoint ck = load_checkpoint(checkpoint);
  const auto entries = parse_protocol(protocol);
  label_map(entries);  // rejects duplicate ids
  const Dataset data = load_dataset(entries, default_root(audio_root, protocol), ck.model.config().input_length);
  const auto scores = score_dataset(ck.model, data, batch_size);

  ScoreSet set;
  for (std::size_t i = 0; i < entries.size(); ++i) set.entries.push_back({entries[i].utterance_id, scores[i], entries[i].key});
  fs::path tmp = scores_path;
  tmp += ".tmp";
  write_scores(set, tmp);
  fs::rename(tmp, scores_path);
  out << "scored " << set.entries.size() << " utterances -> " << scores_path << '\n';

  const bool labeled = std::none_of(entries.begin(), entries.end(), [](const auto& e) { return e.key == Label::unknown; });
  if (labeled && set.has_both_classes()) {
    const auto eer = compute_eer(set);
    out << "EER: " << percent(eer.eer) << " eer=" << shortest(eer.eer) << " threshold=" << shortest(eer.threshold)
        << '\n';
  } else {
    out << "notice: protocol lacks bonafide/spoof keys for both classes; EER not computed\n";
  }
  return kExitOk;
}

ScoreSet labeled_scores(const std::string& scores_path, const std::string& protocol, std::ostream& err) {
  const auto labels = protocol_labels(protocol);
  ScoreReadResult r = read_scores(scores_path, &labels);
  if (!r.unmatched.empty()) {
    err << "warning: " << r.unmatched.size() << " score id(s) missing from " << protocol << ":";
    for (const auto& id : r.unmatched) err << ' ' << id;
    err << '\n';
  }
  return r.scores;
}

int cmd_eer(const std::string& scores_path, const std::string& protocol, std::ostream& out, std::ostream& err) {
  const auto eer = compute_eer(labeled_scores(scores_path, protocol, err));
  out << "EER: " << percent(eer.eer) << " eer=" << shortest(eer.eer) << " threshold=" << shortest(eer.threshold)
      << '\n';
  return kExitOk;
}

int cmd_det(const std::string& scores_path, const std::string& protocol, const std::string& out_path,
            std::ostream& out, std::ostream& err) {
  const auto points = det_points(labeled_scores(scores_path, protocol, err));
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::trunc);
    if (!file) throw std::runtime_error("cannot write " + out_path);
  }
  std::ostream& sink = file.is_open() ? file : out;
  for (const auto& p : points) sink << shortest(p.threshold) << ' ' << shortest(p.far) << ' ' << shortest(p.frr) << '\n';
  return kExitOk;
}

int cmd_params(const ModelOptions& o, std::ostream& out) {
  out << count_parameters(Model<float>(o.config())) << '\n';
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
  bool ok = true;
  for (const auto& r : run_gradcheck_suite(seed)) {
    out << r.line() << '\n';
    ok &= r.passed;
  }
  out << (ok ? "all gradient checks passed" : "gradient check FAILED") << '\n';
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Time-domain synthetic speech detection: train, score and evaluate TSSDNets", "tssd"};
  app.require_subcommand(1);
  std::map<CLI::App*, std::string> configs;
  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", configs[sub], "File of key = value lines (command-line flags win)");
    return sub;
  };
  // Checked after config files are applied so a config may supply them.
  std::vector<std::pair<CLI::App*, CLI::Option*>> required;
  auto need = [&](CLI::App* sub, CLI::Option* opt) {
    required.emplace_back(sub, opt);
    const std::string text = opt->get_description();
    return opt->description(text.empty() ? "Required" : text + " (required)");
  };

  int synth_n = 0;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  SynthOptions synth_opts;
  auto* synth = with_config(app.add_subcommand("synth", "Generate a synthetic bona fide/spoof corpus"));
  need(synth, synth->add_option("--n", synth_n, "Utterances per class"))->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed)->capture_default_str();
  need(synth, synth->add_option("--out", synth_out, "Output directory"));
  synth->add_option("--prefix", synth_opts.prefix, "Id prefix")->capture_default_str();
  synth->add_option("--min-seconds", synth_opts.min_seconds)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--max-seconds", synth_opts.max_seconds)->check(CLI::PositiveNumber)->capture_default_str();

  TrainOptions train_opts;
  auto* train = with_config(app.add_subcommand("train", "Train a model, keeping the best dev-EER epoch"));
  train_opts.model.add_to(*train);
  need(train, train->add_option("--protocol", train_opts.protocol, "Training protocol"));
  train->add_option("--audio-root", train_opts.audio_root, "Directory holding wav/ (default: protocol dir)");
  need(train, train->add_option("--dev-protocol", train_opts.dev_protocol, "Development protocol"));
  train->add_option("--dev-audio-root", train_opts.dev_audio_root);
  train->add_option("--checkpoint", train_opts.checkpoint, "Output checkpoint")->capture_default_str();
  train->add_option("--log", train_opts.log_path, "Also write epoch lines here");
  train->add_option("--epochs", train_opts.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--batch-size", train_opts.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--lr", train_opts.lr, "Base learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--lr-decay", train_opts.lr_decay, "Per-epoch multiplicative decay")->capture_default_str();
  train->add_option("--mixup-alpha", train_opts.mixup_alpha, "Enable mixup with Beta(alpha, alpha)")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--seed", train_opts.seed)->capture_default_str();

  std::string eval_ckpt, eval_protocol, eval_root, eval_scores;
  int eval_batch = 32;
  auto* eval = with_config(app.add_subcommand("eval", "Score a corpus with a trained checkpoint"));
  need(eval, eval->add_option("--checkpoint", eval_ckpt));
  need(eval, eval->add_option("--protocol", eval_protocol, "Protocol or list of utterance ids"));
  eval->add_option("--audio-root", eval_root, "Directory holding wav/ (default: protocol dir)");
  need(eval, eval->add_option("--scores", eval_scores, "Output score file"));
  eval->add_option("--batch-size", eval_batch)->check(CLI::PositiveNumber)->capture_default_str();

  std::string eer_scores, eer_protocol;
  auto* eer = with_config(app.add_subcommand("eer", "Equal error rate of a score file"));
  need(eer, eer->add_option("--scores", eer_scores));
  need(eer, eer->add_option("--protocol", eer_protocol, "Protocol with bonafide/spoof keys"));

  std::string det_scores, det_protocol, det_out;
  auto* det = with_config(app.add_subcommand("det", "DET curve rows: threshold FAR FRR"));
  need(det, det->add_option("--scores", det_scores));
  need(det, det->add_option("--protocol", det_protocol, "Protocol with bonafide/spoof keys"));
  det->add_option("--out", det_out, "Write rows here instead of stdout");

  ModelOptions params_opts;
  auto* params = with_config(app.add_subcommand("params", "Count trainable parameters of a configuration"));
  params_opts.add_to(*params);

  std::uint64_t gc_seed = 1;
  auto* gradcheck = with_config(app.add_subcommand("gradcheck", "Finite-difference check of every layer"));
  gradcheck->add_option("--seed", gc_seed)->capture_default_str();

  std::vector<std::string> argv_store{"tssd"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    for (auto& [sub, path] : configs) {
      if (sub->parsed() && !path.empty()) apply_config_file(*sub, path);
    }
    for (auto [sub, opt] : required) {
      if (sub->parsed() && opt->count() == 0) throw CLI::RequiredError(opt->get_name());
    }
    if (train->parsed() || params->parsed()) {
      (train->parsed() ? train_opts.model : params_opts).config();
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_n, synth_seed, synth_out, synth_opts, out);
    if (train->parsed()) return cmd_train(train_opts, out);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_protocol, eval_root, eval_scores, eval_batch, out);
    if (eer->parsed()) return cmd_eer(eer_scores, eer_protocol, out, err);
    if (det->parsed()) return cmd_det(det_scores, det_protocol, det_out, out, err);
    if (params->parsed()) return cmd_params(params_opts, out);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace tssd::cli
