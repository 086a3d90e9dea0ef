#include "dsf/bptt.hpp"

#include <algorithm>
#include <cmath>

namespace dsf {

struct UnrollAccess {
  static UnrollCache make(std::size_t steps, std::size_t lanes, std::uint64_t fp, std::string name) {
    UnrollCache c;
    c.steps_ = steps;
    c.tapes_.resize(lanes);
    c.fingerprint_ = fp;
    c.cell_name_ = std::move(name);
    return c;
  }
  static LaneTape& lane(UnrollCache& c, std::size_t b) { return c.tapes_[b]; }
};

namespace {

HiddenState zeros_like(const HiddenState& s) {
  HiddenState z;
  if (!s.h.empty()) z.h = Tensor::like(s.h);
  if (!s.c.empty()) z.c = Tensor::like(s.c);
  if (!s.s.empty()) z.s = Tensor::like(s.s);
  return z;
}

}  // namespace

Unrolled unroll_forward(const Cell& cell, const ParamSet& params, const Batch& batch,
                        const std::vector<HiddenState>& carry, const UnrollOptions& opts) {
  if (batch.lanes == 0 || batch.steps == 0) throw ShapeError("unroll_forward: empty batch");
  if (batch.ids.size() != batch.lanes * batch.steps) throw ShapeError("unroll_forward: batch ids are not B x T");
  if (!carry.empty() && carry.size() != batch.lanes) {
    throw ShapeError("unroll_forward: " + std::to_string(carry.size()) + " carried states for " +
                     std::to_string(batch.lanes) + " lanes");
  }
  const UnrollCache* frozen = opts.frozen_masks;
  if (frozen != nullptr && (frozen->lanes() != batch.lanes || frozen->steps() != batch.steps)) {
    throw ShapeError("unroll_forward: frozen mask tape has a different shape");
  }
  cell.check_params(params);
  const std::size_t V = cell.input_size();
  const bool sample = opts.dropout_rng != nullptr && cell.dropout_p() > 0.0;

  Unrolled out{UnrollAccess::make(batch.steps, batch.lanes, params.fingerprint(), cell.name()), {}};
  out.last.reserve(batch.lanes);
  for (std::size_t b = 0; b < batch.lanes; ++b) {
    LaneTape& tape = UnrollAccess::lane(out.cache, b);
    if (batch.carry[b] != 0 && !carry.empty()) {
      cell.check_state(carry[b]);
      tape.initial = carry[b];
    } else {
      tape.initial = cell.zero_state();
    }
    tape.steps.resize(batch.steps);
    for (std::size_t t = 0; t < batch.steps; ++t) {
      StepRecord& rec = tape.steps[t];
      const HiddenState& prev = tape.state_before(t);
      rec.input = batch.id(b, t);
      if (rec.input == Batch::kPad) {
        rec.next = prev;
        continue;
      }
      if (rec.input < 0 || static_cast<std::size_t>(rec.input) >= V) {
        throw DataError("token id " + std::to_string(rec.input) + " outside vocabulary of size " +
                        std::to_string(V));
      }
      if (frozen != nullptr) {
        const StepRecord& src = frozen->lane(b).steps[t];
        rec.mask = src.mask;
        rec.has_mask = src.has_mask;
      } else if (sample) {
        rec.mask = DropMask::sample(cell.hidden_size(), cell.dropout_p(), *opts.dropout_rng);
        rec.has_mask = true;
      }
      rec.next = cell.step(params, InputVec::token(rec.input), prev, rec.has_mask ? &rec.mask : nullptr,
                           &rec.cache);
    }
    out.last.push_back(tape.last());
  }
  return out;
}

void backward(const Cell& cell, const ParamSet& params, const UnrollCache& cache,
              const std::vector<Tensor>& target_grads, Gradients& out) {
  if (cache.cell_name() != cell.name() || cache.params_fingerprint() != params.fingerprint()) {
    throw ShapeError("backward: tape was recorded with different parameters or another cell");
  }
  const std::size_t B = cache.lanes();
  const std::size_t T = cache.steps();
  if (target_grads.size() != B * T) {
    throw ShapeError("backward: expected " + std::to_string(B * T) + " target gradients, got " +
                     std::to_string(target_grads.size()));
  }
  params.require_same_layout(out.params, "backward gradients");
  out.d_h_last.assign(B, Tensor());

  for (std::size_t b = 0; b < B; ++b) {
    const LaneTape& tape = cache.lane(b);
    HiddenState d = zeros_like(tape.last());
    for (std::size_t t = T; t-- > 0;) {
      const Tensor& tg = target_grads[b * T + t];
      if (!tg.empty()) {
        if (!tg.same_shape(d.h)) throw ShapeError("backward: target gradient has shape " + tg.shape_string());
        for (std::size_t i = 0; i < tg.size(); ++i) d.h[i] += tg[i];
      }
      if (t == T - 1) out.d_h_last[b] = d.h;
      const StepRecord& rec = tape.steps[t];
      if (rec.input == Batch::kPad) continue;
      cell.backward_step(params, InputVec::token(rec.input), tape.state_before(t), rec.next, rec.cache,
                         rec.has_mask ? &rec.mask : nullptr, d, out.params);
    }
  }
}

Gradients backward(const Cell& cell, const ParamSet& params, const UnrollCache& cache,
                   const std::vector<Tensor>& target_grads) {
  Gradients g{params.zeros_like(), {}};
  backward(cell, params, cache, target_grads, g);
  return g;
}

void ClipConfig::validate() const {
  if (!(threshold > 0.0) || !std::isfinite(threshold)) throw ConfigError("clip threshold must be positive");
}

double global_norm(const ParamSet& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += squared_norm(g[i].span());
  return std::sqrt(s);
}

double clip_gradients(ParamSet& g, const ClipConfig& cfg) {
  cfg.validate();
  const double norm = global_norm(g);
  if (cfg.mode == ClipMode::elementwise) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (double& v : g[i].span()) v = std::clamp(v, -cfg.threshold, cfg.threshold);
    }
    return norm;
  }
  // The slack keeps a second application a no-op after rounding.
  if (norm > cfg.threshold * (1.0 + 1e-14)) {
    const double scale = cfg.threshold / norm;
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (double& v : g[i].span()) v *= scale;
    }
  }
  return norm;
}

HiddenState carry_with_inference(const HiddenState& h_last, const Tensor& d_h_last, double step) {
  if (!(step >= 0.0) || !std::isfinite(step)) throw ConfigError("iterative inference step must be >= 0");
  if (!d_h_last.same_shape(h_last.h)) {
    throw ShapeError("carry_with_inference: gradient " + d_h_last.shape_string() + " vs state " +
                     h_last.h.shape_string());
  }
  HiddenState out = h_last;
  if (step == 0.0) return out;
  for (std::size_t i = 0; i < out.h.size(); ++i) out.h[i] -= step * d_h_last[i];
  return out;
}

}  // namespace dsf
