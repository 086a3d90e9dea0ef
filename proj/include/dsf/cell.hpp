#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dsf/numerics.hpp"
#include "dsf/params.hpp"

namespace dsf {

// ---------------------------------------------------------------------------
// Cell configuration
// ---------------------------------------------------------------------------

enum class InnerForm { first_order, second_order, general_second_order };
enum class OuterForm { sum, interpolate, late_integration };
enum class GateKind { fixed, bias_only, data_driven };

std::string_view to_string(InnerForm f);
std::string_view to_string(OuterForm f);
std::string_view to_string(GateKind g);
InnerForm parse_inner_form(std::string_view s);
OuterForm parse_outer_form(std::string_view s);
GateKind parse_gate_kind(std::string_view s);

struct GateForm {
  GateKind kind = GateKind::data_driven;
  Tensor fixed_rates;  // only for GateKind::fixed; entries in [0, 1]

  static GateForm fixed(Tensor rates) { return {GateKind::fixed, std::move(rates)}; }
  static GateForm bias_only() { return {GateKind::bias_only, {}}; }
  static GateForm data_driven() { return {GateKind::data_driven, {}}; }
};

// Weights of the sum outer form h = Phi(gamma*z + beta*h_prev). Learned
// weights become trainable tensors initialised to (gamma, beta); fixed ones are
// constants (gamma=1, beta=0 recovers the Elman step).
struct SumWeights {
  bool learned = true;
  double gamma = 1.0;
  double beta = 1.0;
};

struct CellSpec {
  InnerForm inner_form = InnerForm::general_second_order;
  OuterForm outer_form = OuterForm::late_integration;
  GateForm gate_form = GateForm::data_driven();
  Activation phi_inner = Activation::tanh;
  Activation phi_outer = Activation::identity;
  std::size_t hidden_size = 1;
  std::size_t input_size = 1;
  double dropout_p = 0.0;
  bool layer_norm = false;
  SumWeights sum_weights{};

  void validate() const;

  // Second-order inner, late integration, data-driven gate.
  static CellSpec delta_full(std::size_t hidden, std::size_t input);
};

enum class BaselineKind { elman, mi_rnn, scrn, gru, mgu, lstm_peephole };

std::string_view to_string(BaselineKind k);
std::optional<BaselineKind> parse_baseline_kind(std::string_view s);

struct BaselineSpec {
  BaselineKind kind = BaselineKind::elman;
  std::size_t hidden_size = 1;
  std::size_t input_size = 1;
  Activation phi_inner = Activation::tanh;
  // Output nonlinearity: mixing for gru/mgu/elman/mi_rnn, cell squashing for LSTM.
  Activation phi_outer = Activation::identity;
  std::size_t context_size = 0;  // SCRN; 0 selects max(1, H/4)
  double context_rate = 0.95;    // SCRN alpha_s
  double forget_bias = 1.0;      // LSTM initial b_f

  void validate() const;
  std::size_t resolved_context_size() const;
  static BaselineSpec of(BaselineKind kind, std::size_t hidden, std::size_t input);
};

// ---------------------------------------------------------------------------
// Runtime values
// ---------------------------------------------------------------------------

// Carried filtration: h always; c for LSTM; s (context units) for SCRN.
struct HiddenState {
  Tensor h;
  Tensor c;
  Tensor s;

  bool bitwise_equal(const HiddenState& o) const {
    return h.bitwise_equal(o.h) && c.bitwise_equal(o.c) && s.bitwise_equal(o.s);
  }
};

// Inverted dropout mask: entries are 0 or 1/(1-p).
struct DropMask {
  Tensor mask;
  double p = 0.0;

  static DropMask ones(std::size_t n);
  static DropMask sample(std::size_t n, double p, Rng& rng);
};

// The x_t argument: a one-hot token, the null start marker (zero vector), or a
// dense vector.
class InputVec {
 public:
  static constexpr std::int32_t kNull = -1;

  static InputVec token(std::int32_t id) { return InputVec(id); }
  static InputVec null_start() { return InputVec(kNull); }
  static InputVec dense(const Tensor& x) {
    InputVec in(kNull);
    in.dense_ = &x;
    return in;
  }

  bool is_null() const { return dense_ == nullptr && token_ == kNull; }
  std::int32_t token_id() const { return token_; }

  // out = W x
  void project(const Tensor& w, std::span<double> out) const;
  // dW += scale * (d x^T)
  void accumulate(Tensor& dw, std::span<const double> d, double scale = 1.0) const;

 private:
  explicit InputVec(std::int32_t id) : token_(id) {}
  std::int32_t token_ = kNull;
  const Tensor* dense_ = nullptr;
};

enum class ParamInit { gaussian, zeros, ones, constant };

struct ParamDecl {
  std::string name;
  std::size_t rows = 1;
  std::size_t cols = 0;  // 0 declares a vector
  ParamInit init = ParamInit::gaussian;
  double value = 0.0;  // for ParamInit::constant
};

// Per-step intermediates kept for the backward pass; slot meaning is cell-specific.
struct StepCache {
  std::vector<Tensor> slots;
};

// One recurrent step behind a common interface. A cell's tensors occupy the
// leading entries of a ParamSet, in layout() order.
class Cell {
 public:
  virtual ~Cell() = default;

  virtual std::string name() const = 0;
  virtual std::size_t hidden_size() const = 0;
  virtual std::size_t input_size() const = 0;
  virtual const std::vector<ParamDecl>& layout() const = 0;
  virtual HiddenState zero_state() const = 0;
  virtual double dropout_p() const { return 0.0; }

  virtual HiddenState step(const ParamSet& p, const InputVec& x, const HiddenState& prev,
                           const DropMask* mask, StepCache* cache) const = 0;

  // d_state holds dL/d(state_t) on entry and dL/d(state_{t-1}) on exit.
  // Parameter gradients accumulate into `grads` (same layout as `p`).
  virtual void backward_step(const ParamSet& p, const InputVec& x, const HiddenState& prev,
                             const HiddenState& next, const StepCache& cache, const DropMask* mask,
                             HiddenState& d_state, ParamSet& grads) const = 0;

  // Appends this cell's tensors to `out`, initialised per layout().
  void init_params(ParamSet& out, Rng& rng, double sigma) const;
  void check_params(const ParamSet& p) const;
  void check_state(const HiddenState& s) const;
  std::size_t param_count() const;
};

using CellPtr = std::shared_ptr<const Cell>;

CellPtr make_cell(const CellSpec& spec);
CellPtr make_cell(const BaselineSpec& spec);

// Either configuration, as stored in model files.
using AnyCellSpec = std::variant<CellSpec, BaselineSpec>;
CellPtr make_cell(const AnyCellSpec& spec);

// ---------------------------------------------------------------------------
// Building blocks of the DSF step. `params` uses the canonical tensor names
// (W, V, b, b_r, alpha, beta1, beta2, gamma, beta_sum).
// ---------------------------------------------------------------------------

Tensor gate_rates(const CellSpec& spec, const ParamSet& params, const Tensor& x_preact);
Tensor inner_first_order(const CellSpec& spec, const ParamSet& params, const InputVec& x,
                         const Tensor& h_prev);
Tensor inner_second_order(const CellSpec& spec, const ParamSet& params, const InputVec& x,
                          const Tensor& h_prev, bool general);
Tensor outer_combine(const CellSpec& spec, const ParamSet& params, const Tensor& z,
                     const Tensor& h_prev, const Tensor& r);

HiddenState delta_step(const CellSpec& spec, const ParamSet& params, const InputVec& x,
                       const HiddenState& state, const DropMask* mask = nullptr);
HiddenState baseline_step(const BaselineSpec& spec, const ParamSet& params, const InputVec& x,
                          const HiddenState& state);

ParamSet init_params(const Cell& cell, Rng& rng, double sigma);

enum class CountArch { delta_full, elman, gru, lstm_peephole };
std::optional<CountArch> parse_count_arch(std::string_view s);
std::string_view to_string(CountArch a);

// Closed-form parameter counts of a one-layer LM with H hidden units and a
// V-symbol vocabulary (input embedding, recurrence, and softmax head with bias).
std::uint64_t count_params(CountArch arch, std::uint64_t hidden, std::uint64_t vocab);

}  // namespace dsf
