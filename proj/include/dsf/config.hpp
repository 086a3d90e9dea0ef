#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dsf/bptt.hpp"
#include "dsf/cell.hpp"
#include "dsf/data.hpp"
#include "dsf/lm.hpp"

namespace dsf {

// Names accepted by the `cell` key.
const std::vector<std::string>& cell_names();

struct RunConfig {
  TokenMode mode = TokenMode::character;
  std::string cell = "delta";
  std::string gate;  // data, bias, fixed; empty keeps the cell's default
  double gate_rate = 0.5;
  Activation phi_inner = Activation::tanh;
  std::optional<Activation> phi_outer;  // default: identity, tanh for lstm
  std::size_t hidden = 32;
  std::size_t batch = 20;
  std::size_t unroll = 50;
  std::optional<BatchLayout> layout;  // default: padded for word mode, else continuous
  int epochs = 10;
  double lr = 0.002;
  std::vector<double> lr_grid;
  double lr_floor = 1e-5;
  double sigma = 0.1;
  double clip = 5.0;
  ClipMode clip_mode = ClipMode::global_norm;
  std::optional<double> dropout;  // default: 0.5 word, 0.15 char/subword
  std::uint64_t seed = 1;
  int lookahead = 10;
  SchemeKind scheme = SchemeKind::static_eval;
  double step = 0.005;
  double dyn_clip = 5.0;
  std::size_t eval_unroll = 0;  // 0 = unroll
  std::optional<bool> polyak;     // default: subword only
  std::optional<bool> inference;  // iterative inference on the carry; default: subword only
  double inference_step = 0.005;
  std::uint64_t min_freq = 1;  // word or subword threshold
  std::size_t max_vocab = 0;
  std::string vowels = "aeiou";
  std::string dtype = "f64";

  std::string train_path, valid_path, test_path, vocab_path;
  std::string out_dir;
  std::string checkpoint_path;  // default: out/model.dsf
  std::string metrics_path;     // default: out/metrics.jsonl

  // Throws ConfigError for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  // Flat key=value text; '#' starts a comment.
  void apply_text(const std::string& text, const std::string& origin);
  static RunConfig load(const std::string& path);

  void validate() const;

  // Every setting as key=value pairs, in a fixed order; apply_text(echo())
  // reproduces the configuration.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string echo() const;

  double dropout_p() const;
  bool polyak_enabled() const { return polyak.value_or(mode == TokenMode::subword); }
  bool inference_enabled() const { return inference.value_or(mode == TokenMode::subword); }
  BatchLayout batch_layout() const { return layout.value_or(mode == TokenMode::word ? BatchLayout::padded
                                                                                   : BatchLayout::continuous); }
  SubwordRules subword_rules() const;
  VocabOptions vocab_options() const;
  std::string resolved_checkpoint() const;
  std::string resolved_metrics() const;

  AnyCellSpec cell_spec(std::size_t vocab_size) const;
};

}  // namespace dsf
