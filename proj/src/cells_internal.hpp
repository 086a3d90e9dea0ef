#pragma once

// Shared helpers for the cell implementations. Not installed.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dsf/cell.hpp"

namespace dsf::detail {

inline constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
inline constexpr double kLayerNormEps = 1e-5;

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Layer normalisation of one vector with learned gain/shift.
// norm and inv_std are kept for the backward pass.
void layer_norm_forward(std::span<const double> x, const Tensor& gain, const Tensor& shift,
                        std::span<double> norm, double& inv_std, std::span<double> y);
// Accumulates dgain/dshift and writes dx.
void layer_norm_backward(std::span<const double> dy, std::span<const double> norm, double inv_std,
                         const Tensor& gain, Tensor& dgain, Tensor& dshift, std::span<double> dx);

class DeltaCell final : public Cell {
 public:
  DeltaCell(CellSpec spec, std::string name);

  std::string name() const override { return name_; }
  std::size_t hidden_size() const override { return spec_.hidden_size; }
  std::size_t input_size() const override { return spec_.input_size; }
  const std::vector<ParamDecl>& layout() const override { return layout_; }
  HiddenState zero_state() const override;
  double dropout_p() const override { return spec_.dropout_p; }
  const CellSpec& spec() const { return spec_; }

  HiddenState step(const ParamSet& p, const InputVec& x, const HiddenState& prev, const DropMask* mask,
                   StepCache* cache) const override;
  void backward_step(const ParamSet& p, const InputVec& x, const HiddenState& prev, const HiddenState& next,
                     const StepCache& cache, const DropMask* mask, HiddenState& d_state,
                     ParamSet& grads) const override;

  // Individual stages, shared with the free-function building blocks.
  void inner(const ParamSet& p, std::span<const double> px, std::span<const double> vh,
             std::span<double> pre, std::span<double> z) const;
  void gate(const ParamSet& p, std::span<const double> gate_in, std::span<double> r) const;
  void outer(const ParamSet& p, std::span<const double> z, std::span<const double> h_prev,
             std::span<const double> r, std::span<double> o, std::span<double> h) const;

 private:
  bool has_gate() const { return spec_.outer_form != OuterForm::sum; }
  std::size_t add(std::string name, std::size_t rows, std::size_t cols, ParamInit init, double value = 0.0);

  CellSpec spec_;
  std::string name_;
  std::vector<ParamDecl> layout_;
  std::size_t w_ = kAbsent, v_ = kAbsent, b_ = kAbsent, br_ = kAbsent;
  std::size_t alpha_ = kAbsent, beta1_ = kAbsent, beta2_ = kAbsent;
  std::size_t gamma_ = kAbsent, beta_sum_ = kAbsent;
  std::size_t g_rec_ = kAbsent, s_rec_ = kAbsent, g_dat_ = kAbsent, s_dat_ = kAbsent;
};

CellPtr make_gru(const BaselineSpec& spec);
CellPtr make_mgu(const BaselineSpec& spec);
CellPtr make_lstm(const BaselineSpec& spec);
CellPtr make_scrn(const BaselineSpec& spec);

}  // namespace dsf::detail
