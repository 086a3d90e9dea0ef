#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "dsf/checkpoint.hpp"
#include "dsf/config.hpp"
#include "dsf/lm.hpp"

namespace dsf {

using Sequences = std::vector<std::vector<std::int32_t>>;

struct Corpora {
  Vocab vocab;
  Sequences train, valid, test;
};

// Reads the splits named in `cfg`. The vocabulary comes from cfg.vocab_path
// when that file exists, otherwise it is built from the training split.
Corpora load_corpora(const RunConfig& cfg);

struct EpochMetrics {
  int epoch = 0;
  std::string split;
  double nll = 0.0;  // mean per target, nats
  double ppl = 0.0;
  double bpc = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
  std::size_t tokens = 0;
};

std::string metrics_json(const EpochMetrics& m);
std::string config_json(const RunConfig& cfg);

enum class TrainStatus { completed, early_stop };

struct TrainResult {
  ParamSet best_params;
  double best_valid_nll = std::numeric_limits<double>::infinity();
  TrainStatus status = TrainStatus::completed;
  int epochs_run = 0;
  bool polyak_selected = false;
  std::vector<EpochMetrics> history;
};

struct TrainHooks {
  std::ostream* metrics = nullptr;  // receives one JSON line per record
  std::string checkpoint_path;      // best model saved here when non-empty
  // Only improvements below this validation NLL are saved (for lr grids).
  double save_below = std::numeric_limits<double>::infinity();
  std::function<void(const EpochMetrics&)> on_epoch;
};

// Adam with per-token loss, gradient clipping, per-epoch validation, lr
// halving, early stopping, and optional Polyak averaging. A non-finite loss
// raises NumericError; the last saved checkpoint is left in place.
TrainResult train(const RunConfig& cfg, const Corpora& data, const TrainHooks& hooks = {});

EvalReport evaluate_split(const LMModel& model, const RunConfig& cfg, const Sequences& seqs);

Checkpoint make_checkpoint(const RunConfig& cfg, const ParamSet& params);
void save_model(const std::string& path, const RunConfig& cfg, const ParamSet& params);

// Rebuilds a model from a checkpoint; `vocab` must match the trained head.
LMModel model_from_checkpoint(const Checkpoint& ckpt, const Vocab& vocab, RunConfig* cfg_out = nullptr);

}  // namespace dsf
