#include "dsf/optim.hpp"

#include <algorithm>
#include <cmath>

namespace dsf {

AdamState AdamState::for_params(const ParamSet& params, double lr) {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  AdamState st;
  st.m = params.zeros_like();
  st.v = params.zeros_like();
  st.lr = lr;
  return st;
}

void adam_update(ParamSet& params, const ParamSet& grads, AdamState& st) {
  params.require_same_layout(grads, "adam_update gradients");
  params.require_same_layout(st.m, "adam_update first moments");
  params.require_same_layout(st.v, "adam_update second moments");
  st.t += 1;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].span();
    auto g = grads[k].span();
    auto m = st.m[k].span();
    auto v = st.v[k].span();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

void sgd_update(ParamSet& params, const ParamSet& grads, double lr) {
  params.require_same_layout(grads, "sgd_update gradients");
  if (lr == 0.0) return;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].span();
    auto g = grads[k].span();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  }
}

Schedule schedule_step(Schedule s, double val_loss) {
  if (!std::isfinite(val_loss)) throw NumericError("schedule_step: validation loss is not finite");
  if (val_loss < s.best_val) {
    s.best_val = val_loss;
    s.epochs_since_best = 0;
    s.improved = true;
    return s;
  }
  s.improved = false;
  s.lr = std::max(s.lr * 0.5, std::min(s.lr, s.lr_floor));
  s.epochs_since_best += 1;
  return s;
}

void PolyakState::record(const ParamSet& params) {
  if (count_ == 0) {
    sum_ = params;
  } else {
    sum_.require_same_layout(params, "polyak_record");
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto s = sum_[k].span();
      auto p = params[k].span();
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += p[i];
    }
  }
  ++count_;
}

ParamSet PolyakState::finalize() const {
  if (count_ == 0) throw ConfigError("polyak_finalize: no snapshots recorded");
  ParamSet avg = sum_;
  const double n = static_cast<double>(count_);
  for (std::size_t k = 0; k < avg.size(); ++k) {
    for (double& v : avg[k].span()) v /= n;
  }
  return avg;
}

}  // namespace dsf
