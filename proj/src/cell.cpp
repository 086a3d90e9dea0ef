#include "dsf/cell.hpp"

#include <algorithm>
#include <cmath>

#include "cells_internal.hpp"

namespace dsf {

std::string_view to_string(InnerForm f) {
  switch (f) {
    case InnerForm::first_order: return "first_order";
    case InnerForm::second_order: return "second_order";
    case InnerForm::general_second_order: return "general_second_order";
  }
  return "?";
}

std::string_view to_string(OuterForm f) {
  switch (f) {
    case OuterForm::sum: return "sum";
    case OuterForm::interpolate: return "interpolate";
    case OuterForm::late_integration: return "late_integration";
  }
  return "?";
}

std::string_view to_string(GateKind g) {
  switch (g) {
    case GateKind::fixed: return "fixed";
    case GateKind::bias_only: return "bias_only";
    case GateKind::data_driven: return "data_driven";
  }
  return "?";
}

InnerForm parse_inner_form(std::string_view s) {
  if (s == "first_order") return InnerForm::first_order;
  if (s == "second_order") return InnerForm::second_order;
  if (s == "general_second_order") return InnerForm::general_second_order;
  throw ConfigError("unknown inner form '" + std::string(s) +
                    "' (valid: first_order, second_order, general_second_order)");
}

OuterForm parse_outer_form(std::string_view s) {
  if (s == "sum") return OuterForm::sum;
  if (s == "interpolate") return OuterForm::interpolate;
  if (s == "late_integration") return OuterForm::late_integration;
  throw ConfigError("unknown outer form '" + std::string(s) + "' (valid: sum, interpolate, late_integration)");
}

GateKind parse_gate_kind(std::string_view s) {
  if (s == "fixed") return GateKind::fixed;
  if (s == "bias_only") return GateKind::bias_only;
  if (s == "data_driven") return GateKind::data_driven;
  throw ConfigError("unknown gate form '" + std::string(s) + "' (valid: fixed, bias_only, data_driven)");
}

void CellSpec::validate() const {
  if (hidden_size < 1) throw ConfigError("cell: hidden size must be >= 1");
  if (input_size < 1) throw ConfigError("cell: input size must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("cell: dropout_p must be in [0, 1)");
  if (layer_norm && inner_form != InnerForm::general_second_order) {
    throw ConfigError("cell: layer_norm requires the general_second_order inner form");
  }
  if (outer_form != OuterForm::sum && gate_form.kind == GateKind::fixed) {
    const Tensor& r = gate_form.fixed_rates;
    if (r.rank() != 1 || r.size() != hidden_size) {
      throw ConfigError("cell: fixed gate needs " + std::to_string(hidden_size) + " rates, got " +
                        r.shape_string());
    }
    for (double v : r.span()) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("cell: fixed gate rates must lie in [0, 1]");
    }
  }
  if (!std::isfinite(sum_weights.gamma) || !std::isfinite(sum_weights.beta)) {
    throw ConfigError("cell: sum weights must be finite");
  }
}

CellSpec CellSpec::delta_full(std::size_t hidden, std::size_t input) {
  CellSpec s;
  s.hidden_size = hidden;
  s.input_size = input;
  return s;
}

std::string_view to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::elman: return "elman";
    case BaselineKind::mi_rnn: return "mi_rnn";
    case BaselineKind::scrn: return "scrn";
    case BaselineKind::gru: return "gru";
    case BaselineKind::mgu: return "mgu";
    case BaselineKind::lstm_peephole: return "lstm_peephole";
  }
  return "?";
}

std::optional<BaselineKind> parse_baseline_kind(std::string_view s) {
  if (s == "elman") return BaselineKind::elman;
  if (s == "mi_rnn" || s == "mi-rnn") return BaselineKind::mi_rnn;
  if (s == "scrn") return BaselineKind::scrn;
  if (s == "gru") return BaselineKind::gru;
  if (s == "mgu") return BaselineKind::mgu;
  if (s == "lstm_peephole" || s == "lstm") return BaselineKind::lstm_peephole;
  return std::nullopt;
}

void BaselineSpec::validate() const {
  if (hidden_size < 1) throw ConfigError("baseline: hidden size must be >= 1");
  if (input_size < 1) throw ConfigError("baseline: input size must be >= 1");
  if (kind == BaselineKind::scrn && !(context_rate >= 0.0 && context_rate <= 1.0)) {
    throw ConfigError("baseline: SCRN context rate must lie in [0, 1]");
  }
}

std::size_t BaselineSpec::resolved_context_size() const {
  return context_size > 0 ? context_size : std::max<std::size_t>(1, hidden_size / 4);
}

BaselineSpec BaselineSpec::of(BaselineKind kind, std::size_t hidden, std::size_t input) {
  BaselineSpec s;
  s.kind = kind;
  s.hidden_size = hidden;
  s.input_size = input;
  s.phi_outer = kind == BaselineKind::lstm_peephole ? Activation::tanh : Activation::identity;
  return s;
}

DropMask DropMask::ones(std::size_t n) { return {Tensor(n, 1.0), 0.0}; }

DropMask DropMask::sample(std::size_t n, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must be in [0, 1)");
  DropMask m{Tensor(n, 1.0), p};
  if (p == 0.0) return m;
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& v : m.mask.span()) v = rng.bernoulli(p) ? 0.0 : keep_scale;
  return m;
}

void InputVec::project(const Tensor& w, std::span<double> out) const {
  if (dense_ != nullptr) {
    matvec(w, dense_->span(), out);
    return;
  }
  if (token_ == kNull) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const std::size_t cols = w.rank() == 1 ? 1 : w.cols();
  if (token_ < 0 || static_cast<std::size_t>(token_) >= cols) {
    throw ShapeError("token id " + std::to_string(token_) + " outside input range [0, " + std::to_string(cols) +
                     ")");
  }
  copy_column(w, static_cast<std::size_t>(token_), out);
}

void InputVec::accumulate(Tensor& dw, std::span<const double> d, double scale) const {
  if (dense_ != nullptr) {
    if (scale == 1.0) {
      outer_add(dw, d, dense_->span());
    } else {
      std::vector<double> scaled(d.begin(), d.end());
      for (double& v : scaled) v *= scale;
      outer_add(dw, scaled, dense_->span());
    }
    return;
  }
  if (token_ == kNull) return;
  const std::size_t cols = dw.rank() == 1 ? 1 : dw.cols();
  double* p = dw.data() + token_;
  for (std::size_t r = 0; r < dw.rows(); ++r) p[r * cols] += scale * d[r];
}

void Cell::init_params(ParamSet& out, Rng& rng, double sigma) const {
  for (const ParamDecl& d : layout()) {
    const std::vector<std::size_t> dims =
        d.cols == 0 ? std::vector<std::size_t>{d.rows} : std::vector<std::size_t>{d.rows, d.cols};
    Tensor t = d.cols == 0 ? Tensor(d.rows) : Tensor(d.rows, d.cols);
    switch (d.init) {
      case ParamInit::gaussian: t = gaussian_init(dims, sigma, rng); break;
      case ParamInit::zeros: break;
      case ParamInit::ones: t.fill(1.0); break;
      case ParamInit::constant: t.fill(d.value); break;
    }
    out.add(d.name, std::move(t));
  }
}

void Cell::check_params(const ParamSet& p) const {
  const auto& decls = layout();
  if (p.size() < decls.size()) {
    throw ShapeError(name() + ": parameter set has " + std::to_string(p.size()) + " tensors, cell needs " +
                     std::to_string(decls.size()));
  }
  for (std::size_t i = 0; i < decls.size(); ++i) {
    const auto& d = decls[i];
    const Tensor& t = p[i];
    const bool shape_ok = d.cols == 0 ? (t.rank() == 1 && t.size() == d.rows)
                                      : (t.rank() == 2 && t.rows() == d.rows && t.cols() == d.cols);
    if (p.name(i) != d.name || !shape_ok) {
      throw ShapeError(name() + ": tensor " + std::to_string(i) + " is '" + p.name(i) + "' " + t.shape_string() +
                       ", expected '" + d.name + "' [" + std::to_string(d.rows) +
                       (d.cols == 0 ? "" : "x" + std::to_string(d.cols)) + "]");
    }
  }
}

void Cell::check_state(const HiddenState& s) const {
  const HiddenState z = zero_state();
  auto same = [](const Tensor& a, const Tensor& b) { return a.same_shape(b); };
  if (!same(s.h, z.h)) throw ShapeError(name() + ": state h is " + s.h.shape_string() + ", expected " + z.h.shape_string());
  if (!same(s.c, z.c)) {
    throw ShapeError(name() + ": state component c is " + s.c.shape_string() + ", expected " + z.c.shape_string());
  }
  if (!same(s.s, z.s)) {
    throw ShapeError(name() + ": state component s is " + s.s.shape_string() + ", expected " + z.s.shape_string());
  }
}

std::size_t Cell::param_count() const {
  std::size_t n = 0;
  for (const auto& d : layout()) n += d.rows * std::max<std::size_t>(d.cols, 1);
  return n;
}

ParamSet init_params(const Cell& cell, Rng& rng, double sigma) {
  ParamSet p;
  cell.init_params(p, rng, sigma);
  return p;
}

CellPtr make_cell(const CellSpec& spec) {
  spec.validate();
  return std::make_shared<detail::DeltaCell>(spec, "delta");
}

CellPtr make_cell(const BaselineSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case BaselineKind::elman:
    case BaselineKind::mi_rnn: {
      // Both are DSF instances: sum outer form with gamma=1, beta=0.
      CellSpec s;
      s.inner_form = spec.kind == BaselineKind::elman ? InnerForm::first_order : InnerForm::general_second_order;
      s.outer_form = OuterForm::sum;
      s.sum_weights = SumWeights{false, 1.0, 0.0};
      s.phi_inner = spec.phi_inner;
      s.phi_outer = spec.phi_outer;
      s.hidden_size = spec.hidden_size;
      s.input_size = spec.input_size;
      return std::make_shared<detail::DeltaCell>(s, std::string(to_string(spec.kind)));
    }
    case BaselineKind::scrn: return detail::make_scrn(spec);
    case BaselineKind::gru: return detail::make_gru(spec);
    case BaselineKind::mgu: return detail::make_mgu(spec);
    case BaselineKind::lstm_peephole: return detail::make_lstm(spec);
  }
  throw ConfigError("unknown baseline kind");
}

CellPtr make_cell(const AnyCellSpec& spec) {
  return std::visit([](const auto& s) { return make_cell(s); }, spec);
}

// ---------------------------------------------------------------------------
// Free-function building blocks
// ---------------------------------------------------------------------------

namespace {

// The building blocks accept any ParamSet carrying the canonical names, so
// they are checked by name rather than by position.
ParamSet canonical_view(const detail::DeltaCell& cell, const ParamSet& params) {
  ParamSet ordered;
  for (const auto& d : cell.layout()) ordered.add(d.name, params.at(d.name));
  cell.check_params(ordered);
  return ordered;
}

}  // namespace

Tensor gate_rates(const CellSpec& spec, const ParamSet& params, const Tensor& x_preact) {
  const std::size_t H = spec.hidden_size;
  if (spec.gate_form.kind == GateKind::fixed) {
    const Tensor& r = spec.gate_form.fixed_rates;
    if (r.rank() != 1 || r.size() != H) throw ShapeError("gate_rates: fixed rates must have H entries");
    return r;
  }
  const Tensor& br = params.at("b_r");
  if (br.rank() != 1 || br.size() != H) throw ShapeError("gate_rates: b_r must have H entries");
  const bool data = spec.gate_form.kind == GateKind::data_driven;
  if (data && (x_preact.rank() != 1 || x_preact.size() != H)) {
    throw ShapeError("gate_rates: x_preact is " + x_preact.shape_string() + ", expected [" + std::to_string(H) +
                     "]");
  }
  Tensor r(H);
  for (std::size_t i = 0; i < H; ++i) r[i] = detail::sigmoid((data ? x_preact[i] : 0.0) + br[i]);
  return r;
}

Tensor inner_first_order(const CellSpec& spec, const ParamSet& params, const InputVec& x, const Tensor& h_prev) {
  CellSpec s = spec;
  s.inner_form = InnerForm::first_order;
  s.layer_norm = false;
  s.outer_form = OuterForm::interpolate;
  s.gate_form = GateForm::fixed(Tensor(s.hidden_size, 0.0));
  s.validate();
  const detail::DeltaCell cell(s, "inner");
  const ParamSet p = canonical_view(cell, params);
  const std::size_t H = s.hidden_size;
  if (h_prev.rank() != 1 || h_prev.size() != H) throw ShapeError("inner_first_order: h_prev must have H entries");
  std::vector<double> px(H), vh(H), pre(H);
  x.project(p.at("W"), px);
  matvec(p.at("V"), h_prev.span(), vh);
  Tensor z(H);
  cell.inner(p, px, vh, pre, z.span());
  require_finite(z.span(), "inner_first_order output z");
  return z;
}

Tensor inner_second_order(const CellSpec& spec, const ParamSet& params, const InputVec& x, const Tensor& h_prev,
                          bool general) {
  CellSpec s = spec;
  s.inner_form = general ? InnerForm::general_second_order : InnerForm::second_order;
  s.layer_norm = false;
  s.outer_form = OuterForm::interpolate;
  s.gate_form = GateForm::fixed(Tensor(s.hidden_size, 0.0));
  s.validate();
  const detail::DeltaCell cell(s, "inner");
  const ParamSet p = canonical_view(cell, params);
  const std::size_t H = s.hidden_size;
  if (h_prev.rank() != 1 || h_prev.size() != H) throw ShapeError("inner_second_order: h_prev must have H entries");
  std::vector<double> px(H), vh(H), pre(H);
  x.project(p.at("W"), px);
  matvec(p.at("V"), h_prev.span(), vh);
  Tensor z(H);
  cell.inner(p, px, vh, pre, z.span());
  require_finite(z.span(), "inner_second_order output z");
  return z;
}

Tensor outer_combine(const CellSpec& spec, const ParamSet& params, const Tensor& z, const Tensor& h_prev,
                     const Tensor& r) {
  const std::size_t H = spec.hidden_size;
  if (z.size() != H || h_prev.size() != H || (spec.outer_form != OuterForm::sum && r.size() != H)) {
    throw ShapeError("outer_combine: z, h_prev and r must all have " + std::to_string(H) + " entries");
  }
  Tensor o(H), h(H);
  if (spec.outer_form == OuterForm::sum) {
    const bool learned = spec.sum_weights.learned;
    for (std::size_t i = 0; i < H; ++i) {
      const double g = learned ? params.at("gamma")[i] : spec.sum_weights.gamma;
      const double b = learned ? params.at("beta_sum")[i] : spec.sum_weights.beta;
      o[i] = g * z[i] + b * h_prev[i];
    }
  } else {
    for (std::size_t i = 0; i < H; ++i) o[i] = (1.0 - r[i]) * z[i] + r[i] * h_prev[i];
  }
  for (std::size_t i = 0; i < H; ++i) h[i] = activate(spec.phi_outer, o[i]);
  require_finite(h.span(), "outer_combine output h");
  return h;
}

HiddenState delta_step(const CellSpec& spec, const ParamSet& params, const InputVec& x, const HiddenState& state,
                       const DropMask* mask) {
  const CellPtr cell = make_cell(spec);
  cell->check_params(params);
  cell->check_state(state);
  return cell->step(params, x, state, mask, nullptr);
}

HiddenState baseline_step(const BaselineSpec& spec, const ParamSet& params, const InputVec& x,
                          const HiddenState& state) {
  const CellPtr cell = make_cell(spec);
  cell->check_params(params);
  cell->check_state(state);
  return cell->step(params, x, state, nullptr, nullptr);
}

// ---------------------------------------------------------------------------

std::optional<CountArch> parse_count_arch(std::string_view s) {
  if (s == "delta_full") return CountArch::delta_full;
  if (s == "elman") return CountArch::elman;
  if (s == "gru") return CountArch::gru;
  if (s == "lstm_peephole") return CountArch::lstm_peephole;
  return std::nullopt;
}

std::string_view to_string(CountArch a) {
  switch (a) {
    case CountArch::delta_full: return "delta_full";
    case CountArch::elman: return "elman";
    case CountArch::gru: return "gru";
    case CountArch::lstm_peephole: return "lstm_peephole";
  }
  return "?";
}

std::uint64_t count_params(CountArch arch, std::uint64_t H, std::uint64_t V) {
  switch (arch) {
    case CountArch::delta_full: return H * H + 2 * H * V + 5 * H + V;
    case CountArch::elman: return H * H + 2 * H * V + H + V;
    case CountArch::gru: return 3 * H * H + 4 * H * V + 3 * H + V;
    case CountArch::lstm_peephole: return 4 * H * H + 8 * H * V + 4 * H + V;
  }
  return 0;
}

}  // namespace dsf
