#include "oracle.hpp"

#include <cmath>
#include <sstream>

namespace dsf::testing {

ParamSet central_difference(const ParamSet& params, const std::function<double(const ParamSet&)>& loss,
                            double eps) {
  ParamSet work = params;
  ParamSet grad = params.zeros_like();
  for (std::size_t k = 0; k < work.size(); ++k) {
    for (std::size_t i = 0; i < work[k].size(); ++i) {
      const double orig = work[k][i];
      work[k][i] = orig + eps;
      const double up = loss(work);
      work[k][i] = orig - eps;
      const double down = loss(work);
      work[k][i] = orig;
      grad[k][i] = (up - down) / (2.0 * eps);
    }
  }
  return grad;
}

GradCheck compare_gradients(const ParamSet& analytic, const ParamSet& numeric, double floor) {
  analytic.require_same_layout(numeric, "compare_gradients");
  GradCheck out;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    for (std::size_t i = 0; i < analytic[k].size(); ++i) {
      const double a = analytic[k][i];
      const double n = numeric[k][i];
      const double rel = std::abs(a - n) / std::max(std::abs(a) + std::abs(n), floor);
      if (rel > out.max_rel_error || !std::isfinite(rel)) {
        out.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        std::ostringstream s;
        s.precision(10);
        s << analytic.name(k) << '[' << i << "]: " << a << " vs " << n;
        out.worst = s.str();
      }
    }
  }
  return out;
}

std::vector<CellCase> gradient_check_cases(std::size_t H, std::size_t V) {
  std::vector<CellCase> cases;
  auto delta = [&](InnerForm inner, OuterForm outer, GateForm gate) {
    CellSpec s = CellSpec::delta_full(H, V);
    s.inner_form = inner;
    s.outer_form = outer;
    s.gate_form = std::move(gate);
    return s;
  };
  Tensor fixed(H);
  for (std::size_t i = 0; i < H; ++i) fixed[i] = 0.2 + 0.6 * static_cast<double>(i) / static_cast<double>(H);
  cases.push_back({"delta first_order data_driven", delta(InnerForm::first_order, OuterForm::late_integration,
                                                          GateForm::data_driven())});
  cases.push_back({"delta first_order bias_only", delta(InnerForm::first_order, OuterForm::late_integration,
                                                        GateForm::bias_only())});
  cases.push_back({"delta second_order data_driven", delta(InnerForm::second_order, OuterForm::late_integration,
                                                           GateForm::data_driven())});
  cases.push_back({"delta second_order fixed", delta(InnerForm::second_order, OuterForm::interpolate,
                                                     GateForm::fixed(fixed))});
  cases.push_back({"delta general data_driven", delta(InnerForm::general_second_order,
                                                      OuterForm::late_integration, GateForm::data_driven())});
  cases.push_back({"delta general bias_only", delta(InnerForm::general_second_order, OuterForm::late_integration,
                                                    GateForm::bias_only())});
  {
    CellSpec s = delta(InnerForm::general_second_order, OuterForm::sum, GateForm::data_driven());
    cases.push_back({"delta general sum learned", s});
  }
  {
    CellSpec s = delta(InnerForm::general_second_order, OuterForm::late_integration, GateForm::data_driven());
    s.phi_outer = Activation::tanh;
    cases.push_back({"delta general tanh outer", s});
  }
  {
    CellSpec s = delta(InnerForm::general_second_order, OuterForm::late_integration, GateForm::data_driven());
    s.dropout_p = 0.3;
    cases.push_back({"delta general dropout", s});
  }
  {
    CellSpec s = delta(InnerForm::general_second_order, OuterForm::late_integration, GateForm::data_driven());
    s.layer_norm = true;
    cases.push_back({"delta layer_norm", s});
  }
  for (auto kind : {BaselineKind::elman, BaselineKind::mi_rnn, BaselineKind::scrn, BaselineKind::gru,
                    BaselineKind::mgu, BaselineKind::lstm_peephole}) {
    BaselineSpec b = BaselineSpec::of(kind, H, V);
    cases.push_back({std::string(to_string(kind)), b});
  }
  return cases;
}

LMModel random_model(const AnyCellSpec& spec, std::size_t H, std::size_t V, Rng& rng, double scale) {
  LMModel m(with_sizes(spec, H, V), V, TokenMode::character, scale, rng);
  // Move every tensor away from its structured initial value.
  ParamSet& p = m.params();
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (double& v : p[k].span()) v += scale * rng.normal();
  }
  return m;
}

Batch random_batch(std::size_t B, std::size_t T, std::size_t V, Rng& rng) {
  Batch b(B, T);
  for (std::size_t i = 0; i < B * T; ++i) {
    b.ids[i] = static_cast<std::int32_t>(rng.uniform_index(V));
    b.targets[i] = static_cast<std::int32_t>(rng.uniform_index(V));
    b.mask[i] = 1;
  }
  for (std::size_t l = 0; l < B; ++l) b.carry[l] = 1;
  return b;
}

GradCheck check_model_gradient(const AnyCellSpec& spec, std::size_t H, std::size_t V, std::size_t B, std::size_t T,
                               std::uint64_t seed) {
  Rng rng(RngSeed{seed});
  LMModel model = random_model(spec, H, V, rng);
  Batch batch = random_batch(B, T, V, rng);
  // A non-zero carried state exercises the h_prev paths of the first step.
  std::vector<HiddenState> carry;
  for (std::size_t l = 0; l < B; ++l) {
    HiddenState s = model.cell().zero_state();
    for (Tensor* t : {&s.h, &s.c, &s.s}) {
      for (double& v : t->span()) v = 0.5 * rng.normal();
    }
    carry.push_back(std::move(s));
  }
  Rng mask_rng(RngSeed{seed + 1000});
  const Unrolled frozen = unroll_forward(model.cell(), model.params(), batch, carry, {&mask_rng, nullptr});

  ForwardOptions fo;
  fo.unroll.frozen_masks = &frozen.cache;
  Gradients g{model.params().zeros_like(), {}};
  forward_backward(model, batch, carry, g, 1.0, nullptr, fo);

  LMModel probe = model;
  const ParamSet numeric = central_difference(model.params(), [&](const ParamSet& p) {
    probe.params() = p;
    return sequence_nll(probe, batch, carry, nullptr, fo).nll;
  });
  return compare_gradients(g.params, numeric);
}

}  // namespace dsf::testing
