#include <algorithm>
#include <cmath>

#include "cells_internal.hpp"

namespace dsf::detail {

namespace {

class BaselineCell : public Cell {
 public:
  explicit BaselineCell(BaselineSpec spec) : spec_(std::move(spec)) {}

  std::string name() const override { return std::string(to_string(spec_.kind)); }
  std::size_t hidden_size() const override { return spec_.hidden_size; }
  std::size_t input_size() const override { return spec_.input_size; }
  const std::vector<ParamDecl>& layout() const override { return layout_; }
  HiddenState zero_state() const override { return HiddenState{Tensor(spec_.hidden_size), {}, {}}; }

 protected:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols, ParamInit init, double value = 0.0) {
    layout_.push_back(ParamDecl{std::move(name), rows, cols, init, value});
    return layout_.size() - 1;
  }

  // Indices of one W x + V h + b block.
  struct Affine {
    std::size_t w, v, b;
  };

  Affine add_affine(const std::string& suffix, ParamInit bias_init = ParamInit::zeros, double bias = 0.0) {
    const std::size_t H = spec_.hidden_size;
    Affine a{};
    a.w = add("W_" + suffix, H, spec_.input_size, ParamInit::gaussian);
    a.v = add("V_" + suffix, H, H, ParamInit::gaussian);
    a.b = add("b_" + suffix, H, 0, bias_init, bias);
    return a;
  }

  static void forward(const ParamSet& p, const Affine& a, const InputVec& x, std::span<const double> h,
                      std::span<double> out) {
    x.project(p[a.w], out);
    matvec_add(p[a.v], h, out);
    const Tensor& b = p[a.b];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  }

  // Accumulates the gradients of one affine block; dh += V^T da.
  static void backward(const ParamSet& p, const Affine& a, const InputVec& x, std::span<const double> h,
                       std::span<const double> da, std::span<double> dh, ParamSet& g) {
    x.accumulate(g[a.w], da);
    outer_add(g[a.v], da, h);
    Tensor& db = g[a.b];
    for (std::size_t i = 0; i < da.size(); ++i) db[i] += da[i];
    matvec_t_add(p[a.v], da, dh);
  }

  static void ensure(StepCache& c, std::size_t slots, std::size_t h) {
    if (c.slots.size() != slots) c.slots.assign(slots, Tensor());
    for (auto& t : c.slots) {
      if (t.size() != h) t = Tensor(h);
    }
  }

  BaselineSpec spec_;
  std::vector<ParamDecl> layout_;
};

// r = sig(V_r h + W_r x + b_r), q = sig(V_q h + W_q x + b_q),
// g = phi(V_h (q*h) + W_h x + b_h), h' = Phi((1 - r) g + r h).
class Gru final : public BaselineCell {
 public:
  explicit Gru(BaselineSpec spec) : BaselineCell(std::move(spec)) {
    r_ = add_affine("r");
    q_ = add_affine("q");
    h_ = add_affine("h");
  }

  HiddenState step(const ParamSet& p, const InputVec& x, const HiddenState& prev, const DropMask*,
                   StepCache* cache) const override {
    const std::size_t H = spec_.hidden_size;
    StepCache local;
    StepCache& c = cache != nullptr ? *cache : local;
    ensure(c, kCount, H);
    auto& s = c.slots;
    forward(p, r_, x, prev.h.span(), s[kR].span());
    forward(p, q_, x, prev.h.span(), s[kQ].span());
    for (std::size_t i = 0; i < H; ++i) {
      s[kR][i] = sigmoid(s[kR][i]);
      s[kQ][i] = sigmoid(s[kQ][i]);
      s[kQh][i] = s[kQ][i] * prev.h[i];
    }
    forward(p, h_, x, s[kQh].span(), s[kAg].span());
    HiddenState next = zero_state();
    for (std::size_t i = 0; i < H; ++i) {
      s[kG][i] = activate(spec_.phi_inner, s[kAg][i]);
      s[kO][i] = (1.0 - s[kR][i]) * s[kG][i] + s[kR][i] * prev.h[i];
      next.h[i] = activate(spec_.phi_outer, s[kO][i]);
    }
    require_finite(next.h.span(), "gru hidden state");
    return next;
  }

  void backward_step(const ParamSet& p, const InputVec& x, const HiddenState& prev, const HiddenState& next,
                     const StepCache& cache, const DropMask*, HiddenState& d_state, ParamSet& g) const override {
    const std::size_t H = spec_.hidden_size;
    const auto& s = cache.slots;
    std::vector<double> dar(H), daq(H), dag(H), dqh(H, 0.0), dh(H, 0.0);
    for (std::size_t i = 0; i < H; ++i) {
      const double d_o = d_state.h[i] * activate_grad(spec_.phi_outer, s[kO][i], next.h[i]);
      const double r = s[kR][i];
      dh[i] = r * d_o;
      dar[i] = (prev.h[i] - s[kG][i]) * d_o * r * (1.0 - r);
      dag[i] = (1.0 - r) * d_o * activate_grad(spec_.phi_inner, s[kAg][i], s[kG][i]);
    }
    backward(p, h_, x, s[kQh].span(), dag, dqh, g);
    for (std::size_t i = 0; i < H; ++i) {
      const double q = s[kQ][i];
      dh[i] += dqh[i] * q;
      daq[i] = dqh[i] * prev.h[i] * q * (1.0 - q);
    }
    backward(p, r_, x, prev.h.span(), dar, dh, g);
    backward(p, q_, x, prev.h.span(), daq, dh, g);
    std::copy(dh.begin(), dh.end(), d_state.h.data());
  }

 private:
  enum : std::size_t { kR, kQ, kQh, kAg, kG, kO, kCount };
  Affine r_{}, q_{}, h_{};
};

// f = sig(V_f h + W_f x + b_f), g = phi(V_h (f*h) + W_h x + b_h),
// h' = Phi((1 - f) g + f h).
class Mgu final : public BaselineCell {
 public:
  explicit Mgu(BaselineSpec spec) : BaselineCell(std::move(spec)) {
    f_ = add_affine("f");
    h_ = add_affine("h");
  }

  HiddenState step(const ParamSet& p, const InputVec& x, const HiddenState& prev, const DropMask*,
                   StepCache* cache) const override {
    const std::size_t H = spec_.hidden_size;
    StepCache local;
    StepCache& c = cache != nullptr ? *cache : local;
    ensure(c, kCount, H);
    auto& s = c.slots;
    forward(p, f_, x, prev.h.span(), s[kF].span());
    for (std::size_t i = 0; i < H; ++i) {
      s[kF][i] = sigmoid(s[kF][i]);
      s[kFh][i] = s[kF][i] * prev.h[i];
    }
    forward(p, h_, x, s[kFh].span(), s[kAg].span());
    HiddenState next = zero_state();
    for (std::size_t i = 0; i < H; ++i) {
      s[kG][i] = activate(spec_.phi_inner, s[kAg][i]);
      s[kO][i] = (1.0 - s[kF][i]) * s[kG][i] + s[kF][i] * prev.h[i];
      next.h[i] = activate(spec_.phi_outer, s[kO][i]);
    }
    require_finite(next.h.span(), "mgu hidden state");
    return next;
  }

  void backward_step(const ParamSet& p, const InputVec& x, const HiddenState& prev, const HiddenState& next,
                     const StepCache& cache, const DropMask*, HiddenState& d_state, ParamSet& g) const override {
    const std::size_t H = spec_.hidden_size;
    const auto& s = cache.slots;
    std::vector<double> df(H), dag(H), dfh(H, 0.0), dh(H, 0.0), daf(H);
    for (std::size_t i = 0; i < H; ++i) {
      const double d_o = d_state.h[i] * activate_grad(spec_.phi_outer, s[kO][i], next.h[i]);
      const double f = s[kF][i];
      dh[i] = f * d_o;
      df[i] = (prev.h[i] - s[kG][i]) * d_o;
      dag[i] = (1.0 - f) * d_o * activate_grad(spec_.phi_inner, s[kAg][i], s[kG][i]);
    }
    backward(p, h_, x, s[kFh].span(), dag, dfh, g);
    for (std::size_t i = 0; i < H; ++i) {
      const double f = s[kF][i];
      dh[i] += dfh[i] * f;
      daf[i] = (df[i] + dfh[i] * prev.h[i]) * f * (1.0 - f);
    }
    backward(p, f_, x, prev.h.span(), daf, dh, g);
    std::copy(dh.begin(), dh.end(), d_state.h.data());
  }

 private:
  enum : std::size_t { kF, kFh, kAg, kG, kO, kCount };
  Affine f_{}, h_{};
};

// LSTM with diagonal peepholes U_i, U_f (on c_prev) and U_r (on c).
class Lstm final : public BaselineCell {
 public:
  explicit Lstm(BaselineSpec spec) : BaselineCell(std::move(spec)) {
    const std::size_t H = spec_.hidden_size;
    z_ = add_affine("z");
    i_ = add_affine("i");
    ui_ = add("U_i", H, 0, ParamInit::zeros);
    f_ = add_affine("f", ParamInit::constant, spec_.forget_bias);
    uf_ = add("U_f", H, 0, ParamInit::zeros);
    r_ = add_affine("r");
    ur_ = add("U_r", H, 0, ParamInit::zeros);
  }

  HiddenState zero_state() const override {
    return HiddenState{Tensor(spec_.hidden_size), Tensor(spec_.hidden_size), {}};
  }

  HiddenState step(const ParamSet& p, const InputVec& x, const HiddenState& prev, const DropMask*,
                   StepCache* cache) const override {
    const std::size_t H = spec_.hidden_size;
    StepCache local;
    StepCache& c = cache != nullptr ? *cache : local;
    ensure(c, kCount, H);
    auto& s = c.slots;
    const auto hp = prev.h.span();
    forward(p, z_, x, hp, s[kAz].span());
    forward(p, i_, x, hp, s[kI].span());
    forward(p, f_, x, hp, s[kF].span());
    forward(p, r_, x, hp, s[kR].span());
    HiddenState next = zero_state();
    for (std::size_t k = 0; k < H; ++k) {
      s[kZ][k] = activate(spec_.phi_inner, s[kAz][k]);
      s[kI][k] = sigmoid(s[kI][k] + p[ui_][k] * prev.c[k]);
      s[kF][k] = sigmoid(s[kF][k] + p[uf_][k] * prev.c[k]);
      next.c[k] = s[kF][k] * prev.c[k] + s[kI][k] * s[kZ][k];
      s[kR][k] = sigmoid(s[kR][k] + p[ur_][k] * next.c[k]);
      s[kTc][k] = activate(spec_.phi_outer, next.c[k]);
      next.h[k] = s[kR][k] * s[kTc][k];
    }
    require_finite(next.h.span(), "lstm hidden state");
    require_finite(next.c.span(), "lstm cell state");
    return next;
  }

  void backward_step(const ParamSet& p, const InputVec& x, const HiddenState& prev, const HiddenState& next,
                     const StepCache& cache, const DropMask*, HiddenState& d_state, ParamSet& g) const override {
    const std::size_t H = spec_.hidden_size;
    const auto& s = cache.slots;
    std::vector<double> daz(H), dai(H), daf(H), dar(H), dh(H, 0.0), dc_prev(H);
    for (std::size_t k = 0; k < H; ++k) {
      const double r = s[kR][k], f = s[kF][k], in = s[kI][k];
      const double dhk = d_state.h[k];
      double dc = d_state.c[k] + dhk * r * activate_grad(spec_.phi_outer, next.c[k], s[kTc][k]);
      dar[k] = dhk * s[kTc][k] * r * (1.0 - r);
      g[ur_][k] += dar[k] * next.c[k];
      dc += dar[k] * p[ur_][k];
      daf[k] = dc * prev.c[k] * f * (1.0 - f);
      dai[k] = dc * s[kZ][k] * in * (1.0 - in);
      daz[k] = dc * in * activate_grad(spec_.phi_inner, s[kAz][k], s[kZ][k]);
      g[uf_][k] += daf[k] * prev.c[k];
      g[ui_][k] += dai[k] * prev.c[k];
      dc_prev[k] = dc * f + daf[k] * p[uf_][k] + dai[k] * p[ui_][k];
    }
    const auto hp = prev.h.span();
    backward(p, z_, x, hp, daz, dh, g);
    backward(p, i_, x, hp, dai, dh, g);
    backward(p, f_, x, hp, daf, dh, g);
    backward(p, r_, x, hp, dar, dh, g);
    std::copy(dh.begin(), dh.end(), d_state.h.data());
    std::copy(dc_prev.begin(), dc_prev.end(), d_state.c.data());
  }

 private:
  enum : std::size_t { kAz, kZ, kI, kF, kR, kTc, kCount };
  Affine z_{}, i_{}, f_{}, r_{};
  std::size_t ui_ = kAbsent, uf_ = kAbsent, ur_ = kAbsent;
};

// s' = (1 - a) B x + a s, h' = sig(P s' + A x + R_rec h).
class Scrn final : public BaselineCell {
 public:
  explicit Scrn(BaselineSpec spec) : BaselineCell(std::move(spec)) {
    const std::size_t H = spec_.hidden_size;
    const std::size_t C = spec_.resolved_context_size();
    b_ = add("B", C, spec_.input_size, ParamInit::gaussian);
    p_ = add("P", H, C, ParamInit::gaussian);
    a_ = add("A", H, spec_.input_size, ParamInit::gaussian);
    r_ = add("R_rec", H, H, ParamInit::gaussian);
  }

  HiddenState zero_state() const override {
    return HiddenState{Tensor(spec_.hidden_size), {}, Tensor(spec_.resolved_context_size())};
  }

  HiddenState step(const ParamSet& p, const InputVec& x, const HiddenState& prev, const DropMask*,
                   StepCache*) const override {
    const std::size_t H = spec_.hidden_size;
    const double a = spec_.context_rate;
    HiddenState next = zero_state();
    x.project(p[b_], next.s.span());
    for (std::size_t k = 0; k < next.s.size(); ++k) next.s[k] = (1.0 - a) * next.s[k] + a * prev.s[k];
    x.project(p[a_], next.h.span());
    matvec_add(p[p_], next.s.span(), next.h.span());
    matvec_add(p[r_], prev.h.span(), next.h.span());
    for (std::size_t k = 0; k < H; ++k) next.h[k] = sigmoid(next.h[k]);
    require_finite(next.h.span(), "scrn hidden state");
    return next;
  }

  void backward_step(const ParamSet& p, const InputVec& x, const HiddenState& prev, const HiddenState& next,
                     const StepCache&, const DropMask*, HiddenState& d_state, ParamSet& g) const override {
    const std::size_t H = spec_.hidden_size;
    const double a = spec_.context_rate;
    std::vector<double> dah(H), dh(H, 0.0);
    std::vector<double> ds(d_state.s.span().begin(), d_state.s.span().end());
    for (std::size_t k = 0; k < H; ++k) dah[k] = d_state.h[k] * next.h[k] * (1.0 - next.h[k]);
    outer_add(g[p_], dah, next.s.span());
    matvec_t_add(p[p_], dah, ds);
    x.accumulate(g[a_], dah);
    outer_add(g[r_], dah, prev.h.span());
    matvec_t_add(p[r_], dah, dh);
    x.accumulate(g[b_], ds, 1.0 - a);
    for (std::size_t k = 0; k < ds.size(); ++k) d_state.s[k] = a * ds[k];
    std::copy(dh.begin(), dh.end(), d_state.h.data());
  }

 private:
  std::size_t b_ = kAbsent, p_ = kAbsent, a_ = kAbsent, r_ = kAbsent;
};

}  // namespace

CellPtr make_gru(const BaselineSpec& spec) { return std::make_shared<Gru>(spec); }
CellPtr make_mgu(const BaselineSpec& spec) { return std::make_shared<Mgu>(spec); }
CellPtr make_lstm(const BaselineSpec& spec) { return std::make_shared<Lstm>(spec); }
CellPtr make_scrn(const BaselineSpec& spec) { return std::make_shared<Scrn>(spec); }

}  // namespace dsf::detail
