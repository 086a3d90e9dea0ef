#include <algorithm>
#include <cmath>

#include "cells_internal.hpp"

namespace dsf::detail {

namespace {

enum Slot : std::size_t { kPx, kVh, kPre, kZ, kR, kO, kNRec, kNDat, kDRec, kDDat, kInvStd, kSlotCount };

void ensure_slots(StepCache& c, std::size_t h) {
  if (c.slots.size() != kSlotCount) c.slots.assign(kSlotCount, Tensor());
  for (std::size_t i = 0; i < kSlotCount; ++i) {
    const std::size_t n = i == kInvStd ? 2 : h;
    if (c.slots[i].size() != n) c.slots[i] = Tensor(n);
  }
}

}  // namespace

void layer_norm_forward(std::span<const double> x, const Tensor& gain, const Tensor& shift,
                        std::span<double> norm, double& inv_std, std::span<double> y) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < x.size(); ++i) {
    norm[i] = (x[i] - mean) * inv_std;
    y[i] = gain[i] * norm[i] + shift[i];
  }
}

void layer_norm_backward(std::span<const double> dy, std::span<const double> norm, double inv_std,
                         const Tensor& gain, Tensor& dgain, Tensor& dshift, std::span<double> dx) {
  const std::size_t n = dy.size();
  double mean_dn = 0.0, mean_dn_n = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dn = dy[i] * gain[i];
    dgain[i] += dy[i] * norm[i];
    dshift[i] += dy[i];
    mean_dn += dn;
    mean_dn_n += dn * norm[i];
  }
  mean_dn /= static_cast<double>(n);
  mean_dn_n /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    dx[i] = inv_std * (dy[i] * gain[i] - mean_dn - norm[i] * mean_dn_n);
  }
}

DeltaCell::DeltaCell(CellSpec spec, std::string name) : spec_(std::move(spec)), name_(std::move(name)) {
  spec_.validate();
  const std::size_t H = spec_.hidden_size;
  w_ = add("W", H, spec_.input_size, ParamInit::gaussian);
  v_ = add("V", H, H, ParamInit::gaussian);
  if (spec_.layer_norm) {
    if (has_gate() && spec_.gate_form.kind != GateKind::fixed) br_ = add("b_r", H, 0, ParamInit::zeros);
    g_rec_ = add("ln_gain_rec", H, 0, ParamInit::ones);
    s_rec_ = add("ln_shift_rec", H, 0, ParamInit::zeros);
    g_dat_ = add("ln_gain_dat", H, 0, ParamInit::ones);
    s_dat_ = add("ln_shift_dat", H, 0, ParamInit::zeros);
    return;
  }
  b_ = add("b", H, 0, ParamInit::zeros);
  if (spec_.inner_form == InnerForm::general_second_order) {
    alpha_ = add("alpha", H, 0, ParamInit::ones);
    beta1_ = add("beta1", H, 0, ParamInit::ones);
    beta2_ = add("beta2", H, 0, ParamInit::ones);
  }
  if (has_gate()) {
    if (spec_.gate_form.kind != GateKind::fixed) br_ = add("b_r", H, 0, ParamInit::zeros);
  } else if (spec_.sum_weights.learned) {
    gamma_ = add("gamma", H, 0, ParamInit::constant, spec_.sum_weights.gamma);
    beta_sum_ = add("beta_sum", H, 0, ParamInit::constant, spec_.sum_weights.beta);
  }
}

std::size_t DeltaCell::add(std::string name, std::size_t rows, std::size_t cols, ParamInit init, double value) {
  layout_.push_back(ParamDecl{std::move(name), rows, cols, init, value});
  return layout_.size() - 1;
}

HiddenState DeltaCell::zero_state() const { return HiddenState{Tensor(spec_.hidden_size), {}, {}}; }

void DeltaCell::inner(const ParamSet& p, std::span<const double> px, std::span<const double> vh,
                      std::span<double> pre, std::span<double> z) const {
  const std::size_t H = spec_.hidden_size;
  switch (spec_.inner_form) {
    case InnerForm::first_order: {
      const Tensor& b = p[b_];
      for (std::size_t i = 0; i < H; ++i) pre[i] = vh[i] + px[i] + b[i];
      break;
    }
    case InnerForm::second_order: {
      const Tensor& b = p[b_];
      for (std::size_t i = 0; i < H; ++i) pre[i] = vh[i] * px[i] + b[i];
      break;
    }
    case InnerForm::general_second_order: {
      if (spec_.layer_norm) {
        // px and vh are already normalised here.
        for (std::size_t i = 0; i < H; ++i) pre[i] = vh[i] * px[i] + vh[i] + px[i];
        break;
      }
      const Tensor& a = p[alpha_];
      const Tensor& b1 = p[beta1_];
      const Tensor& b2 = p[beta2_];
      const Tensor& b = p[b_];
      for (std::size_t i = 0; i < H; ++i) pre[i] = a[i] * vh[i] * px[i] + b1[i] * vh[i] + b2[i] * px[i] + b[i];
      break;
    }
  }
  for (std::size_t i = 0; i < H; ++i) z[i] = activate(spec_.phi_inner, pre[i]);
}

void DeltaCell::gate(const ParamSet& p, std::span<const double> gate_in, std::span<double> r) const {
  const std::size_t H = spec_.hidden_size;
  switch (spec_.gate_form.kind) {
    case GateKind::fixed:
      std::copy_n(spec_.gate_form.fixed_rates.data(), H, r.begin());
      break;
    case GateKind::bias_only:
      for (std::size_t i = 0; i < H; ++i) r[i] = sigmoid(p[br_][i]);
      break;
    case GateKind::data_driven:
      for (std::size_t i = 0; i < H; ++i) r[i] = sigmoid(gate_in[i] + p[br_][i]);
      break;
  }
}

void DeltaCell::outer(const ParamSet& p, std::span<const double> z, std::span<const double> h_prev,
                      std::span<const double> r, std::span<double> o, std::span<double> h) const {
  const std::size_t H = spec_.hidden_size;
  if (!has_gate()) {
    const bool learned = spec_.sum_weights.learned;
    for (std::size_t i = 0; i < H; ++i) {
      const double g = learned ? p[gamma_][i] : spec_.sum_weights.gamma;
      const double b = learned ? p[beta_sum_][i] : spec_.sum_weights.beta;
      o[i] = g * z[i] + b * h_prev[i];
    }
  } else {
    for (std::size_t i = 0; i < H; ++i) o[i] = (1.0 - r[i]) * z[i] + r[i] * h_prev[i];
  }
  for (std::size_t i = 0; i < H; ++i) h[i] = activate(spec_.phi_outer, o[i]);
}

HiddenState DeltaCell::step(const ParamSet& p, const InputVec& x, const HiddenState& prev, const DropMask* mask,
                            StepCache* cache) const {
  const std::size_t H = spec_.hidden_size;
  StepCache local;
  StepCache& c = cache != nullptr ? *cache : local;
  ensure_slots(c, H);
  auto& s = c.slots;

  x.project(p[w_], s[kPx].span());
  matvec(p[v_], prev.h.span(), s[kVh].span());
  std::span<const double> rec = s[kVh].span();
  std::span<const double> dat = s[kPx].span();
  if (spec_.layer_norm) {
    layer_norm_forward(s[kVh].span(), p[g_rec_], p[s_rec_], s[kNRec].span(), s[kInvStd][0], s[kDRec].span());
    layer_norm_forward(s[kPx].span(), p[g_dat_], p[s_dat_], s[kNDat].span(), s[kInvStd][1], s[kDDat].span());
    rec = s[kDRec].span();
    dat = s[kDDat].span();
  }
  inner(p, dat, rec, s[kPre].span(), s[kZ].span());

  // The outer stage sees the masked z; kZ keeps the unmasked value.
  std::vector<double> zm(s[kZ].span().begin(), s[kZ].span().end());
  if (mask != nullptr) {
    for (std::size_t i = 0; i < H; ++i) zm[i] *= mask->mask[i];
  }
  if (has_gate()) gate(p, dat, s[kR].span());

  HiddenState next{Tensor(H), {}, {}};
  outer(p, zm, prev.h.span(), s[kR].span(), s[kO].span(), next.h.span());
  require_finite(next.h.span(), name_ + " hidden state");
  return next;
}

void DeltaCell::backward_step(const ParamSet& p, const InputVec& x, const HiddenState& prev,
                              const HiddenState& next, const StepCache& cache, const DropMask* mask,
                              HiddenState& d_state, ParamSet& grads) const {
  const std::size_t H = spec_.hidden_size;
  const auto& s = cache.slots;
  const Tensor& z = s[kZ];
  const Tensor& r = s[kR];
  const Tensor& o = s[kO];
  const Tensor& hp = prev.h;

  std::vector<double> d_o(H), dzm(H), dpre(H), dgate(H, 0.0), dh_prev(H, 0.0);
  for (std::size_t i = 0; i < H; ++i) d_o[i] = d_state.h[i] * activate_grad(spec_.phi_outer, o[i], next.h[i]);

  auto masked = [&](std::size_t i) { return mask != nullptr ? z[i] * mask->mask[i] : z[i]; };

  if (!has_gate()) {
    const bool learned = spec_.sum_weights.learned;
    for (std::size_t i = 0; i < H; ++i) {
      const double g = learned ? p[gamma_][i] : spec_.sum_weights.gamma;
      const double b = learned ? p[beta_sum_][i] : spec_.sum_weights.beta;
      dzm[i] = g * d_o[i];
      dh_prev[i] += b * d_o[i];
      if (learned) {
        grads[gamma_][i] += masked(i) * d_o[i];
        grads[beta_sum_][i] += hp[i] * d_o[i];
      }
    }
  } else {
    for (std::size_t i = 0; i < H; ++i) {
      dzm[i] = (1.0 - r[i]) * d_o[i];
      dh_prev[i] += r[i] * d_o[i];
      const double dr = (hp[i] - masked(i)) * d_o[i];
      if (spec_.gate_form.kind == GateKind::fixed) continue;
      const double da = dr * r[i] * (1.0 - r[i]);
      grads[br_][i] += da;
      if (spec_.gate_form.kind == GateKind::data_driven) dgate[i] = da;
    }
  }

  for (std::size_t i = 0; i < H; ++i) {
    const double dz = mask != nullptr ? dzm[i] * mask->mask[i] : dzm[i];
    dpre[i] = dz * activate_grad(spec_.phi_inner, s[kPre][i], z[i]);
  }

  std::vector<double> dvh(H), dpx(H);
  if (spec_.layer_norm) {
    const Tensor& drec = s[kDRec];
    const Tensor& ddat = s[kDDat];
    std::vector<double> dd_rec(H), dd_dat(H);
    for (std::size_t i = 0; i < H; ++i) {
      dd_rec[i] = dpre[i] * (ddat[i] + 1.0);
      dd_dat[i] = dpre[i] * (drec[i] + 1.0) + dgate[i];
    }
    layer_norm_backward(dd_rec, s[kNRec].span(), s[kInvStd][0], p[g_rec_], grads[g_rec_], grads[s_rec_], dvh);
    layer_norm_backward(dd_dat, s[kNDat].span(), s[kInvStd][1], p[g_dat_], grads[g_dat_], grads[s_dat_], dpx);
  } else {
    const Tensor& px = s[kPx];
    const Tensor& vh = s[kVh];
    Tensor& db = grads[b_];
    switch (spec_.inner_form) {
      case InnerForm::first_order:
        for (std::size_t i = 0; i < H; ++i) {
          dvh[i] = dpre[i];
          dpx[i] = dpre[i];
        }
        break;
      case InnerForm::second_order:
        for (std::size_t i = 0; i < H; ++i) {
          dvh[i] = dpre[i] * px[i];
          dpx[i] = dpre[i] * vh[i];
        }
        break;
      case InnerForm::general_second_order: {
        const Tensor& a = p[alpha_];
        const Tensor& b1 = p[beta1_];
        const Tensor& b2 = p[beta2_];
        for (std::size_t i = 0; i < H; ++i) {
          dvh[i] = dpre[i] * (a[i] * px[i] + b1[i]);
          dpx[i] = dpre[i] * (a[i] * vh[i] + b2[i]);
          grads[alpha_][i] += dpre[i] * vh[i] * px[i];
          grads[beta1_][i] += dpre[i] * vh[i];
          grads[beta2_][i] += dpre[i] * px[i];
        }
        break;
      }
    }
    for (std::size_t i = 0; i < H; ++i) {
      db[i] += dpre[i];
      dpx[i] += dgate[i];
    }
  }

  outer_add(grads[v_], dvh, hp.span());
  matvec_t_add(p[v_], dvh, dh_prev);
  x.accumulate(grads[w_], dpx);
  std::copy(dh_prev.begin(), dh_prev.end(), d_state.h.data());
}

}  // namespace dsf::detail
