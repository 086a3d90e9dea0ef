#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dsf/bptt.hpp"
#include "dsf/cell.hpp"
#include "dsf/data.hpp"

namespace dsf {

inline constexpr std::string_view kHeadWeight = "R";
inline constexpr std::string_view kHeadBias = "c_out";

// softmax(R h + c_out)
Tensor predict(const Tensor& r, const Tensor& c_out, const Tensor& h);

// A recurrent cell over one-hot symbols feeding a softmax head. The ParamSet
// holds the cell tensors followed by R (V x H) and c_out (V).
class LMModel {
 public:
  LMModel(AnyCellSpec spec, std::size_t vocab_size, TokenMode mode, double sigma, Rng& rng);
  LMModel(AnyCellSpec spec, std::size_t vocab_size, TokenMode mode, ParamSet params);

  const AnyCellSpec& spec() const { return spec_; }
  const Cell& cell() const { return *cell_; }
  TokenMode mode() const { return mode_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t hidden_size() const { return cell_->hidden_size(); }

  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }
  void set_params(ParamSet p);

  const Tensor& head_weight() const { return params_[head_w_]; }
  const Tensor& head_bias() const { return params_[head_b_]; }
  std::size_t head_weight_index() const { return head_w_; }
  std::size_t head_bias_index() const { return head_b_; }

  Tensor predict(const Tensor& h) const { return dsf::predict(head_weight(), head_bias(), h); }

 private:
  void check() const;

  AnyCellSpec spec_;
  CellPtr cell_;
  TokenMode mode_;
  std::size_t vocab_size_;
  ParamSet params_;
  std::size_t head_w_ = 0, head_b_ = 0;
};

// Input size of the cell for a vocabulary of V symbols.
AnyCellSpec with_sizes(AnyCellSpec spec, std::size_t hidden, std::size_t vocab);

struct NllResult {
  double nll = 0.0;        // summed over counted targets, nats
  std::size_t tokens = 0;
};

struct ForwardOptions {
  UnrollOptions unroll;
  std::vector<double>* token_logprobs = nullptr;  // appended in lane-major order
  // Called once per counted target, before any parameter change.
  std::function<void(std::size_t lane, std::size_t step)> on_predict;
};

// Summed NLL of one batch; `last` receives the per-lane final states.
NllResult sequence_nll(const LMModel& model, const Batch& batch, const std::vector<HiddenState>& carry,
                       std::vector<HiddenState>* last = nullptr, const ForwardOptions& opts = {});

// Forward plus reverse pass of loss_scale * NLL(batch). Gradients accumulate
// into `grads` (model parameter layout) and d_h_last is filled per lane.
NllResult forward_backward(const LMModel& model, const Batch& batch, const std::vector<HiddenState>& carry,
                           Gradients& grads, double loss_scale, std::vector<HiddenState>* last = nullptr,
                           const ForwardOptions& opts = {});

struct EvalReport {
  double nll = 0.0;
  std::size_t tokens = 0;
  double ppl = 0.0;
  double bpc = 0.0;
  std::vector<double> token_logprobs;

  double mean_nll() const { return nll / static_cast<double>(tokens); }
};

// PPL = exp(nll / N), BPC = nll / (N ln 2).
EvalReport metrics(double nll, std::size_t tokens);

enum class SchemeKind { static_eval, dynamic_1, dynamic_2 };
std::string_view to_string(SchemeKind k);
SchemeKind parse_scheme(std::string_view s);

struct DynamicScheme {
  SchemeKind kind = SchemeKind::static_eval;
  double step = 0.005;
  double clip = 5.0;  // global-norm clip of each update; <= 0 disables

  void validate() const;
};

struct EvalOptions {
  BatchOptions batching{1, 50, BatchLayout::continuous, true};
  std::int32_t eos = 0;
  bool keep_trace = false;
  // Test-then-train instrumentation: predictions of one slice, then its update.
  std::function<void(std::size_t unit, std::size_t lane, std::size_t step)> on_predict;
  std::function<void(std::size_t unit)> on_update;
  ParamSet* adapted = nullptr;  // receives the parameters after a dynamic run
};

// Dynamic schemes adapt a private copy of the parameters. dynamic_2 needs
// `valid`: it first adapts over it (results discarded), then scores `test`.
EvalReport evaluate(const LMModel& model, const std::vector<std::vector<std::int32_t>>& test,
                    const DynamicScheme& scheme, const EvalOptions& opts = {},
                    const std::vector<std::vector<std::int32_t>>* valid = nullptr);

}  // namespace dsf
