#include "dsf/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>

#include <json.hpp>

#include "dsf/optim.hpp"

namespace dsf {

Corpora load_corpora(const RunConfig& cfg) {
  if (cfg.train_path.empty()) throw ConfigError("no training corpus given (train=PATH)");
  Corpora c;
  const auto train_lines = read_lines(cfg.train_path);
  const SubwordRules rules = cfg.subword_rules();
  if (!cfg.vocab_path.empty() && std::filesystem::exists(cfg.vocab_path)) {
    c.vocab = Vocab::load(cfg.vocab_path, cfg.mode);
  } else {
    c.vocab = Vocab::build(train_lines, cfg.mode, rules, cfg.vocab_options());
  }
  c.train = encode_corpus(c.vocab, train_lines, rules);
  if (!cfg.valid_path.empty()) c.valid = encode_corpus(c.vocab, read_lines(cfg.valid_path), rules);
  if (!cfg.test_path.empty()) c.test = encode_corpus(c.vocab, read_lines(cfg.test_path), rules);
  return c;
}

std::string metrics_json(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["split"] = m.split;
  j["nll"] = m.nll;
  j["ppl"] = m.ppl;
  j["bpc"] = m.bpc;
  j["lr"] = m.lr;
  j["wall_seconds"] = m.wall_seconds;
  j["tokens"] = m.tokens;
  return j.dump();
}

std::string config_json(const RunConfig& cfg) {
  nlohmann::ordered_json c;
  for (const auto& [k, v] : cfg.entries()) c[k] = v;
  nlohmann::ordered_json j;
  j["config"] = c;
  return j.dump();
}

EvalReport evaluate_split(const LMModel& model, const RunConfig& cfg, const Sequences& seqs) {
  EvalOptions o;
  o.batching = BatchOptions{cfg.batch, cfg.eval_unroll > 0 ? cfg.eval_unroll : cfg.unroll, cfg.batch_layout(), true};
  o.eos = 0;
  return evaluate(model, seqs, DynamicScheme{SchemeKind::static_eval}, o);
}

Checkpoint make_checkpoint(const RunConfig& cfg, const ParamSet& params) {
  Checkpoint c;
  c.config_echo = cfg.echo();
  c.params = params;
  c.rng_state = Rng(RngSeed{cfg.seed}).serialize();
  return c;
}

void save_model(const std::string& path, const RunConfig& cfg, const ParamSet& params) {
  save_checkpoint(path, make_checkpoint(cfg, params), parse_dtype(cfg.dtype));
}

LMModel model_from_checkpoint(const Checkpoint& ckpt, const Vocab& vocab, RunConfig* cfg_out) {
  RunConfig cfg;
  cfg.apply_text(ckpt.config_echo, "checkpoint config");
  if (!ckpt.params.contains(kHeadBias)) throw DataError("checkpoint has no output head");
  const std::size_t trained_v = ckpt.params.at(kHeadBias).size();
  if (trained_v != vocab.size()) {
    throw DataError("vocabulary has " + std::to_string(vocab.size()) + " symbols but the checkpoint was trained with " +
                    std::to_string(trained_v));
  }
  if (vocab.mode() != cfg.mode) {
    throw DataError("vocabulary mode " + std::string(to_string(vocab.mode())) + " does not match checkpoint mode " +
                    std::string(to_string(cfg.mode)));
  }
  LMModel m(cfg.cell_spec(vocab.size()), vocab.size(), cfg.mode, ckpt.params);
  if (cfg_out != nullptr) *cfg_out = cfg;
  return m;
}

namespace {

EpochMetrics record(int epoch, std::string split, const EvalReport& r, double lr, double wall) {
  return EpochMetrics{epoch, std::move(split), r.mean_nll(), r.ppl, r.bpc, lr, wall, r.tokens};
}

}  // namespace

TrainResult train(const RunConfig& cfg, const Corpora& data, const TrainHooks& hooks) {
  cfg.validate();
  if (data.valid.empty()) throw ConfigError("training needs a validation split (valid=PATH)");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  Rng init_rng(RngSeed{cfg.seed});
  Rng drop_rng(RngSeed{cfg.seed + 1});
  Rng order_rng(RngSeed{cfg.seed + 2});
  LMModel model(cfg.cell_spec(data.vocab.size()), data.vocab.size(), cfg.mode, cfg.sigma, init_rng);
  AdamState adam = AdamState::for_params(model.params(), cfg.lr);
  Schedule sched;
  sched.lr = cfg.lr;
  sched.lr_floor = cfg.lr_floor;
  sched.lookahead = cfg.lookahead;
  PolyakState polyak;
  const double p_drop = cfg.dropout_p();
  const bool inference = cfg.inference_enabled();
  const ClipConfig clip{cfg.clip, cfg.clip_mode};
  const BatchOptions bopts{cfg.batch, cfg.unroll, cfg.batch_layout(), true};

  TrainResult res;
  res.best_params = model.params();
  auto emit = [&](const EpochMetrics& m) {
    res.history.push_back(m);
    if (hooks.metrics != nullptr) *hooks.metrics << metrics_json(m) << '\n' << std::flush;
    if (hooks.on_epoch) hooks.on_epoch(m);
  };
  auto save_if_best = [&](const ParamSet& p, double valid_nll) {
    if (!hooks.checkpoint_path.empty() && valid_nll < hooks.save_below) save_model(hooks.checkpoint_path, cfg, p);
  };

  Sequences order = data.train;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.mode == TokenMode::word) order_rng.shuffle(order.begin(), order.end());
    const std::vector<Batch> batches = batchify(order, data.vocab.eos(), bopts);
    std::vector<HiddenState> carry;
    NllResult total;
    for (const Batch& batch : batches) {
      const std::size_t n = batch.token_count();
      if (n == 0) continue;
      Gradients g{model.params().zeros_like(), {}};
      ForwardOptions fo;
      if (p_drop > 0.0) fo.unroll.dropout_rng = &drop_rng;
      std::vector<HiddenState> last;
      const NllResult r = forward_backward(model, batch, carry, g, 1.0 / static_cast<double>(n), &last, fo);
      if (!std::isfinite(r.nll)) {
        throw NumericError("training loss became non-finite in epoch " + std::to_string(epoch));
      }
      clip_gradients(g.params, clip);
      if (!g.params.all_finite()) throw NumericError("non-finite gradient in epoch " + std::to_string(epoch));
      adam_update(model.params(), g.params, adam);
      if (!model.params().all_finite()) {
        throw NumericError("parameters became non-finite in epoch " + std::to_string(epoch));
      }
      if (inference) {
        for (std::size_t b = 0; b < last.size(); ++b) {
          last[b] = carry_with_inference(last[b], g.d_h_last[b], cfg.inference_step);
        }
      }
      carry = std::move(last);
      total.nll += r.nll;
      total.tokens += r.tokens;
    }
    emit(record(epoch, "train", metrics(total.nll, total.tokens), adam.lr, elapsed()));

    const EvalReport v = evaluate_split(model, cfg, data.valid);
    emit(record(epoch, "valid", v, adam.lr, elapsed()));
    res.epochs_run = epoch;
    if (cfg.polyak_enabled()) polyak.record(model.params());

    sched = schedule_step(sched, v.mean_nll());
    if (sched.improved) {
      res.best_params = model.params();
      res.best_valid_nll = v.mean_nll();
      save_if_best(res.best_params, res.best_valid_nll);
    }
    adam.lr = sched.lr;
    if (sched.early_stop() && epoch < cfg.epochs) {
      res.status = TrainStatus::early_stop;
      break;
    }
  }

  if (cfg.polyak_enabled()) {
    const ParamSet avg = polyak.finalize();
    const LMModel averaged(model.spec(), model.vocab_size(), model.mode(), avg);
    const EvalReport v = evaluate_split(averaged, cfg, data.valid);
    emit(record(res.epochs_run, "valid_polyak", v, adam.lr, elapsed()));
    if (v.mean_nll() < res.best_valid_nll) {
      res.best_params = avg;
      res.best_valid_nll = v.mean_nll();
      res.polyak_selected = true;
      save_if_best(res.best_params, res.best_valid_nll);
    }
  }
  return res;
}

}  // namespace dsf
