#pragma once

#include <cstdint>
#include <vector>

#include "dsf/batch.hpp"
#include "dsf/cell.hpp"

namespace dsf {

// Tape of one lane of an unrolled slice.
struct StepRecord {
  std::int32_t input = Batch::kPad;  // kPad: held step, state passes through unchanged
  HiddenState next;
  StepCache cache;
  DropMask mask;
  bool has_mask = false;
};

struct LaneTape {
  HiddenState initial;
  std::vector<StepRecord> steps;

  const HiddenState& state_before(std::size_t t) const { return t == 0 ? initial : steps[t - 1].next; }
  const HiddenState& last() const { return steps.empty() ? initial : steps.back().next; }
};

class UnrollCache {
 public:
  std::size_t steps() const { return steps_; }
  std::size_t lanes() const { return tapes_.size(); }
  const LaneTape& lane(std::size_t b) const { return tapes_[b]; }
  const Tensor& h(std::size_t b, std::size_t t) const { return tapes_[b].steps[t].next.h; }
  std::uint64_t params_fingerprint() const { return fingerprint_; }
  const std::string& cell_name() const { return cell_name_; }

 private:
  friend struct UnrollAccess;
  std::size_t steps_ = 0;
  std::vector<LaneTape> tapes_;
  std::uint64_t fingerprint_ = 0;
  std::string cell_name_;
};

struct UnrollOptions {
  // Dropout masks are sampled from this stream (lane-major, then by step)
  // when the cell has dropout_p > 0. Null: no dropout (evaluation).
  Rng* dropout_rng = nullptr;
  // Reuse the masks recorded in another tape of the same shape instead.
  const UnrollCache* frozen_masks = nullptr;
};

struct Unrolled {
  UnrollCache cache;
  std::vector<HiddenState> last;  // per lane, the state after the slice
};

// carry[b] is the state entering lane b; it is used only where batch.carry[b]
// is set, otherwise the lane starts from the zero (null start) state.
Unrolled unroll_forward(const Cell& cell, const ParamSet& params, const Batch& batch,
                        const std::vector<HiddenState>& carry, const UnrollOptions& opts = {});

struct Gradients {
  ParamSet params;                // same layout as the model parameters
  std::vector<Tensor> d_h_last;   // per lane, dL/dh_T
};

// target_grads[b * T + t] is dL/dh_t from the loss at step t (empty = zero).
// Parameter gradients accumulate into `out.params`, which must share the
// layout of `params`. Gradients stop at the slice boundary.
void backward(const Cell& cell, const ParamSet& params, const UnrollCache& cache,
              const std::vector<Tensor>& target_grads, Gradients& out);
Gradients backward(const Cell& cell, const ParamSet& params, const UnrollCache& cache,
                   const std::vector<Tensor>& target_grads);

enum class ClipMode { global_norm, elementwise };

struct ClipConfig {
  double threshold = 5.0;
  ClipMode mode = ClipMode::global_norm;

  void validate() const;
};

double global_norm(const ParamSet& g);
// Returns the norm before clipping.
double clip_gradients(ParamSet& g, const ClipConfig& cfg);

// h_carry = h_last - step * d_h_last; the other state components pass through.
HiddenState carry_with_inference(const HiddenState& h_last, const Tensor& d_h_last, double step);

}  // namespace dsf
