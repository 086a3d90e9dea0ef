#pragma once

#include <cstdint>
#include <limits>

#include "dsf/params.hpp"

namespace dsf {

struct AdamState {
  ParamSet m;
  ParamSet v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 0.002;

  static AdamState for_params(const ParamSet& params, double lr);
};

// Bias-corrected Adam step, applied per tensor.
void adam_update(ParamSet& params, const ParamSet& grads, AdamState& st);
// p <- p - lr * g
void sgd_update(ParamSet& params, const ParamSet& grads, double lr);

struct Schedule {
  double lr = 0.002;
  double lr_floor = 1e-5;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;
  int lookahead = 10;
  bool improved = false;  // outcome of the latest step

  bool early_stop() const { return epochs_since_best >= lookahead; }
};

// Improvement records the new best; otherwise lr is halved (down to the floor).
Schedule schedule_step(Schedule sched, double val_loss);

// Arithmetic mean of recorded parameter snapshots.
class PolyakState {
 public:
  void record(const ParamSet& params);
  ParamSet finalize() const;
  std::uint64_t count() const { return count_; }

 private:
  ParamSet sum_;
  std::uint64_t count_ = 0;
};

}  // namespace dsf
