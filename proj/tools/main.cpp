#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsf/analysis.hpp"
#include "dsf/train.hpp"

namespace {

using namespace dsf;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Canonical flags mapped onto config keys; applied after --config.
struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, CLI::Option*>> opts;

  void attach(CLI::App* app, const std::vector<std::string>& keys) {
    app->add_option("--config", config_path, "key=value configuration file");
    for (const auto& key : keys) {
      std::string flag = "--" + key;
      for (char& c : flag) {
        if (c == '_') c = '-';
      }
      opts.emplace_back(key, app->add_option(flag, values[key], "config key " + key));
    }
    app->add_option("--set", sets, "extra key=value setting (repeatable)");
  }

  RunConfig resolve(RunConfig base = {}) const {
    RunConfig cfg = std::move(base);
    if (!config_path.empty()) {
      cfg = RunConfig::load(config_path);
    }
    for (const auto& [key, opt] : opts) {
      if (opt->count() > 0) cfg.set(key, values.at(key));
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    return cfg;
  }
};

const std::vector<std::string> kTrainKeys{"mode",    "cell",   "hidden", "batch", "unroll", "lr",     "seed",
                                          "clip",    "dropout", "scheme", "step",  "out",    "epochs", "train",
                                          "valid",   "test",   "vocab",  "gate",  "lr_grid", "sigma", "polyak",
                                          "inference", "min_freq"};

void print_report(const std::string& label, const EvalReport& r) {
  std::cout << label << ": nll/token=" << r.mean_nll() << " ppl=" << r.ppl << " bpc=" << r.bpc
            << " tokens=" << r.tokens << '\n';
}

int cmd_train(const Overrides& ov) {
  RunConfig cfg = ov.resolve();
  cfg.validate();
  if (cfg.out_dir.empty()) cfg.out_dir = "run";
  std::filesystem::create_directories(cfg.out_dir);
  std::filesystem::remove(cfg.resolved_checkpoint());
  Corpora data = load_corpora(cfg);
  const std::string vocab_out = cfg.out_dir + "/vocab.tsv";
  if (cfg.vocab_path != vocab_out) data.vocab.save(vocab_out);
  cfg.vocab_path = vocab_out;

  std::ofstream metrics(cfg.resolved_metrics(), std::ios::trunc);
  if (!metrics) throw DataError("cannot write metrics file '" + cfg.resolved_metrics() + "'");
  metrics << config_json(cfg) << '\n';

  std::vector<double> grid = cfg.lr_grid.empty() ? std::vector<double>{cfg.lr} : cfg.lr_grid;
  TrainResult best;
  double best_lr = grid.front();
  for (double lr : grid) {
    RunConfig run = cfg;
    run.lr = lr;
    TrainHooks hooks;
    hooks.metrics = &metrics;
    hooks.checkpoint_path = cfg.resolved_checkpoint();
    hooks.save_below = best.best_valid_nll;
    hooks.on_epoch = [&](const EpochMetrics& m) {
      std::cout << "epoch " << m.epoch << ' ' << m.split << " nll=" << m.nll << " bpc=" << m.bpc << " ppl=" << m.ppl
                << " lr=" << m.lr << '\n';
    };
    TrainResult r = train(run, data, hooks);
    std::cout << "lr " << lr << ": best valid nll/token " << r.best_valid_nll << " after " << r.epochs_run
              << " epochs\n";
    if (r.best_valid_nll < best.best_valid_nll || grid.size() == 1) {
      best = std::move(r);
      best_lr = lr;
    }
  }
  cfg.lr = best_lr;
  if (!std::filesystem::exists(cfg.resolved_checkpoint())) save_model(cfg.resolved_checkpoint(), cfg, best.best_params);

  if (!data.test.empty()) {
    const LMModel model(cfg.cell_spec(data.vocab.size()), data.vocab.size(), cfg.mode, best.best_params);
    const EvalReport t = evaluate_split(model, cfg, data.test);
    metrics << metrics_json(EpochMetrics{best.epochs_run, "test", t.mean_nll(), t.ppl, t.bpc, best_lr, 0.0, t.tokens})
            << '\n';
    print_report("test", t);
  }
  std::cout << "checkpoint: " << cfg.resolved_checkpoint() << '\n';
  std::cout << "status: " << (best.status == TrainStatus::early_stop ? "early-stop" : "completed") << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint, vocab, test, valid, metrics, scheme, trace;
  double step = 0.005;
  double clip = 5.0;
  std::size_t batch = 0, unroll = 0;
};

void attach_eval(CLI::App* app, EvalArgs& a, const std::string& default_scheme) {
  a.scheme = default_scheme;
  app->add_option("--checkpoint", a.checkpoint, "DSF1 checkpoint")->required();
  app->add_option("--vocab", a.vocab, "vocabulary TSV (default: the one recorded in the checkpoint)");
  app->add_option("--test", a.test, "corpus to score")->required();
  app->add_option("--valid", a.valid, "validation corpus (dyn2 adapts on it first)");
  app->add_option("--scheme", a.scheme, "static, dyn1, or dyn2")->capture_default_str();
  app->add_option("--step", a.step, "SGD step of dynamic evaluation")->capture_default_str();
  app->add_option("--clip", a.clip, "global-norm clip of each dynamic update; <= 0 disables")->capture_default_str();
  app->add_option("--batch", a.batch, "lanes (default: 1)");
  app->add_option("--unroll", a.unroll, "slice length (default: training unroll)");
  app->add_option("--metrics", a.metrics, "append a JSON line with the report");
  app->add_option("--trace", a.trace, "write per-token log-probabilities, one per line");
}

int cmd_eval(const EvalArgs& a) {
  const DynamicScheme scheme{parse_scheme(a.scheme), a.step, a.clip};
  if (scheme.kind == SchemeKind::dynamic_2 && a.valid.empty()) {
    throw ConfigError("scheme dyn2 needs --valid PATH");
  }
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  RunConfig echo;
  echo.apply_text(ckpt.config_echo, "checkpoint config");
  const std::string vocab_path = a.vocab.empty() ? echo.vocab_path : a.vocab;
  if (vocab_path.empty()) throw ConfigError("no vocabulary given (--vocab PATH)");
  const Vocab vocab = Vocab::load(vocab_path, echo.mode);
  RunConfig cfg;
  const LMModel model = model_from_checkpoint(ckpt, vocab, &cfg);
  const SubwordRules rules = cfg.subword_rules();
  const Sequences test = encode_corpus(vocab, read_lines(a.test), rules);
  Sequences valid;
  if (!a.valid.empty()) valid = encode_corpus(vocab, read_lines(a.valid), rules);

  EvalOptions o;
  o.batching = BatchOptions{a.batch > 0 ? a.batch : 1, a.unroll > 0 ? a.unroll : cfg.unroll, BatchLayout::continuous,
                            true};
  o.eos = vocab.eos();
  o.keep_trace = !a.trace.empty();
  const EvalReport r = evaluate(model, test, scheme, o, a.valid.empty() ? nullptr : &valid);
  print_report(std::string(to_string(scheme.kind)), r);
  if (!a.metrics.empty()) {
    std::ofstream m(a.metrics, std::ios::app);
    if (!m) throw DataError("cannot write metrics file '" + a.metrics + "'");
    m << metrics_json(EpochMetrics{0, "test_" + std::string(to_string(scheme.kind)), r.mean_nll(), r.ppl, r.bpc,
                                   scheme.step, 0.0, r.tokens})
      << '\n';
  }
  if (!a.trace.empty()) {
    std::ofstream t(a.trace, std::ios::trunc);
    t.precision(17);
    for (double lp : r.token_logprobs) t << lp << '\n';
  }
  return 0;
}

int cmd_partition(const std::vector<std::string>& words, const std::string& vowels) {
  SubwordRules rules;
  rules.vowels = vowels;
  rules.validate();
  auto emit = [&](const std::string& line) {
    std::istringstream in(line);
    std::string w, out;
    while (in >> w) {
      for (const auto& piece : partition_word(w, rules)) out += (out.empty() ? "" : " ") + piece;
    }
    std::cout << out << '\n';
  };
  if (!words.empty()) {
    for (const auto& w : words) emit(w);
    return 0;
  }
  std::string line;
  while (std::getline(std::cin, line)) emit(line);
  return 0;
}

struct AnalyzeArgs {
  std::string checkpoint, vocab, text, input, out, svg;
};

int cmd_analyze(const AnalyzeArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  RunConfig echo;
  echo.apply_text(ckpt.config_echo, "checkpoint config");
  const std::string vocab_path = a.vocab.empty() ? echo.vocab_path : a.vocab;
  if (vocab_path.empty()) throw ConfigError("no vocabulary given (--vocab PATH)");
  const Vocab vocab = Vocab::load(vocab_path, echo.mode);
  RunConfig cfg;
  const LMModel model = model_from_checkpoint(ckpt, vocab, &cfg);
  if (a.text.empty() == a.input.empty()) throw ConfigError("analyze needs exactly one of --text or --input");
  std::vector<std::string> lines = a.input.empty() ? std::vector<std::string>{a.text} : read_lines(a.input);
  std::vector<std::int32_t> ids;
  for (const auto& line : lines) {
    const auto l = vocab.encode_line(line, cfg.subword_rules());
    ids.insert(ids.end(), l.begin(), l.end());
  }
  const DeltaTrace trace = delta_trace(model, ids);
  if (a.out.empty()) {
    write_trace_csv(std::cout, trace, vocab);
  } else {
    std::ofstream out(a.out, std::ios::trunc);
    if (!out) throw DataError("cannot write '" + a.out + "'");
    write_trace_csv(out, trace, vocab);
  }
  if (!a.svg.empty()) {
    std::ofstream svg(a.svg, std::ios::trunc);
    if (!svg) throw DataError("cannot write '" + a.svg + "'");
    write_trace_svg(svg, trace, vocab);
  }
  return 0;
}

int cmd_count_params(const std::string& arch, std::size_t hidden, std::size_t vocab) {
  const auto a = parse_count_arch(arch);
  if (!a) throw ConfigError("unknown architecture '" + arch + "' (valid: delta_full, elman, gru, lstm_peephole)");
  const AnyCellSpec spec = [&]() -> AnyCellSpec {
    switch (*a) {
      case CountArch::delta_full: return CellSpec::delta_full(hidden, vocab);
      case CountArch::elman: return BaselineSpec::of(BaselineKind::elman, hidden, vocab);
      case CountArch::gru: return BaselineSpec::of(BaselineKind::gru, hidden, vocab);
      case CountArch::lstm_peephole: return BaselineSpec::of(BaselineKind::lstm_peephole, hidden, vocab);
    }
    throw ConfigError("unreachable architecture");
  }();
  Rng rng(RngSeed{1});
  const LMModel model(spec, vocab, TokenMode::word, 0.1, rng);
  const auto closed = count_params(*a, hidden, vocab);
  const auto live = model.params().element_count();
  std::cout << "arch=" << to_string(*a) << " H=" << hidden << " V=" << vocab << '\n';
  std::cout << "closed_form=" << closed << '\n';
  std::cout << "live_census=" << live << '\n';
  std::cout << (closed == live ? "match" : "differ") << '\n';
  return 0;
}

int cmd_build_vocab(const Overrides& ov, const std::string& out) {
  RunConfig cfg = ov.resolve();
  cfg.validate();
  if (cfg.train_path.empty()) throw ConfigError("build-vocab needs --train PATH");
  const Vocab v = Vocab::build(read_lines(cfg.train_path), cfg.mode, cfg.subword_rules(), cfg.vocab_options());
  v.save(out);
  std::cout << v.size() << " symbols written to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differential State Framework language-model toolkit"};
  app.require_subcommand(1);

  Overrides train_ov;
  auto* train = app.add_subcommand("train", "train a model and write checkpoint, vocabulary, and metrics");
  train_ov.attach(train, kTrainKeys);

  EvalArgs eval_args, dyn_args;
  auto* eval = app.add_subcommand("eval", "score a corpus with a checkpoint");
  attach_eval(eval, eval_args, "static");
  auto* dyn = app.add_subcommand("dynamic-eval", "score a corpus with test-then-train adaptation");
  attach_eval(dyn, dyn_args, "dyn1");

  std::vector<std::string> words;
  std::string vowels = "aeiou";
  auto* part = app.add_subcommand("partition", "split words into subwords (stdin when no words are given)");
  part->add_option("words", words, "words to split");
  part->add_option("--vowels", vowels, "vowel set")->capture_default_str();

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "per-token L1 state-change trace as CSV");
  analyze->add_option("--checkpoint", an.checkpoint, "DSF1 checkpoint")->required();
  analyze->add_option("--vocab", an.vocab, "vocabulary TSV");
  analyze->add_option("--text", an.text, "text to analyse");
  analyze->add_option("--input", an.input, "file to analyse");
  analyze->add_option("--out", an.out, "CSV output (default: stdout)");
  analyze->add_option("--svg", an.svg, "also write a bar chart");

  std::string arch;
  std::size_t cp_hidden = 100, cp_vocab = 10000;
  auto* count = app.add_subcommand("count-params", "closed-form and live parameter counts");
  count->add_option("--arch", arch, "delta_full, elman, gru, or lstm_peephole")->required();
  count->add_option("--hidden", cp_hidden, "hidden units")->capture_default_str();
  count->add_option("--vocab", cp_vocab, "vocabulary size")->capture_default_str();

  Overrides vocab_ov;
  std::string vocab_out;
  auto* bv = app.add_subcommand("build-vocab", "build a vocabulary TSV from a corpus");
  vocab_ov.attach(bv, {"mode", "train", "min_freq"});
  bv->add_option("--output", vocab_out, "output TSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_ov);
    if (*eval) return cmd_eval(eval_args);
    if (*dyn) return cmd_eval(dyn_args);
    if (*part) return cmd_partition(words, vowels);
    if (*analyze) return cmd_analyze(an);
    if (*count) return cmd_count_params(arch, cp_hidden, cp_vocab);
    if (*bv) return cmd_build_vocab(vocab_ov, vocab_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return 0;
}
