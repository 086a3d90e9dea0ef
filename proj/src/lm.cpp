#include "dsf/lm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dsf/optim.hpp"

namespace dsf {

Tensor predict(const Tensor& r, const Tensor& c_out, const Tensor& h) {
  if (r.rank() != 2 || c_out.rank() != 1 || h.rank() != 1 || r.rows() != c_out.size() || r.cols() != h.size()) {
    throw ShapeError("predict: R " + r.shape_string() + ", c_out " + c_out.shape_string() + ", h " +
                     h.shape_string() + " do not conform");
  }
  Tensor p = c_out;
  matvec_add(r, h.span(), p.span());
  softmax_inplace(p.span());
  return p;
}

AnyCellSpec with_sizes(AnyCellSpec spec, std::size_t hidden, std::size_t vocab) {
  std::visit(
      [&](auto& s) {
        s.hidden_size = hidden;
        s.input_size = vocab;
      },
      spec);
  return spec;
}

LMModel::LMModel(AnyCellSpec spec, std::size_t vocab_size, TokenMode mode, double sigma, Rng& rng)
    : spec_(std::move(spec)), cell_(make_cell(spec_)), mode_(mode), vocab_size_(vocab_size) {
  cell_->init_params(params_, rng, sigma);
  head_w_ = params_.add(std::string(kHeadWeight), gaussian_init({vocab_size, cell_->hidden_size()}, sigma, rng));
  head_b_ = params_.add(std::string(kHeadBias), Tensor(vocab_size));
  check();
}

LMModel::LMModel(AnyCellSpec spec, std::size_t vocab_size, TokenMode mode, ParamSet params)
    : spec_(std::move(spec)), cell_(make_cell(spec_)), mode_(mode), vocab_size_(vocab_size),
      params_(std::move(params)) {
  const std::size_t n = cell_->layout().size();
  head_w_ = n;
  head_b_ = n + 1;
  check();
}

void LMModel::set_params(ParamSet p) {
  params_.require_same_layout(p, "LMModel::set_params");
  params_ = std::move(p);
}

void LMModel::check() const {
  if (vocab_size_ < 1) throw ConfigError("model: vocabulary must be non-empty");
  if (cell_->input_size() != vocab_size_) {
    throw ShapeError("model: cell input size " + std::to_string(cell_->input_size()) + " but vocabulary has " +
                     std::to_string(vocab_size_) + " symbols");
  }
  cell_->check_params(params_);
  const std::size_t n = cell_->layout().size();
  if (params_.size() != n + 2 || params_.name(n) != kHeadWeight || params_.name(n + 1) != kHeadBias) {
    throw ShapeError("model: parameter set must end with the head tensors R and c_out");
  }
  const Tensor& r = params_[n];
  const Tensor& c = params_[n + 1];
  if (r.rank() != 2 || r.rows() != vocab_size_ || r.cols() != cell_->hidden_size() || c.rank() != 1 ||
      c.size() != vocab_size_) {
    throw ShapeError("model: head R " + r.shape_string() + " / c_out " + c.shape_string() + " for V=" +
                     std::to_string(vocab_size_) + ", H=" + std::to_string(cell_->hidden_size()));
  }
}

namespace {

// Runs the head over every counted position; with `grads`, also writes the
// per-step dL/dh into target_grads and accumulates head gradients.
NllResult head_pass(const LMModel& model, const Batch& batch, const UnrollCache& cache, const ForwardOptions& opts,
                    Gradients* grads, double scale, std::vector<Tensor>* target_grads) {
  const std::size_t V = model.vocab_size();
  const std::size_t H = model.hidden_size();
  const Tensor& r = model.head_weight();
  const Tensor& c = model.head_bias();
  NllResult res;
  Tensor p(V);
  for (std::size_t b = 0; b < batch.lanes; ++b) {
    for (std::size_t t = 0; t < batch.steps; ++t) {
      if (!batch.counts(b, t)) continue;
      const std::int32_t y = batch.target(b, t);
      if (y < 0 || static_cast<std::size_t>(y) >= V) {
        throw DataError("target id " + std::to_string(y) + " outside vocabulary of size " + std::to_string(V));
      }
      const Tensor& h = cache.h(b, t);
      std::copy(c.span().begin(), c.span().end(), p.data());
      matvec_add(r, h.span(), p.span());
      softmax_inplace(p.span());
      const double lp = std::log(p[static_cast<std::size_t>(y)]);
      if (opts.on_predict) opts.on_predict(b, t);
      if (opts.token_logprobs != nullptr) opts.token_logprobs->push_back(lp);
      res.nll -= lp;
      res.tokens += 1;
      if (grads == nullptr) continue;
      Tensor dlogits(V);
      for (std::size_t k = 0; k < V; ++k) dlogits[k] = scale * p[k];
      dlogits[static_cast<std::size_t>(y)] -= scale;
      outer_add(grads->params[model.head_weight_index()], dlogits.span(), h.span());
      Tensor& dc = grads->params[model.head_bias_index()];
      for (std::size_t k = 0; k < V; ++k) dc[k] += dlogits[k];
      Tensor dh(H);
      matvec_t_add(r, dlogits.span(), dh.span());
      (*target_grads)[b * batch.steps + t] = std::move(dh);
    }
  }
  return res;
}

}  // namespace

NllResult sequence_nll(const LMModel& model, const Batch& batch, const std::vector<HiddenState>& carry,
                       std::vector<HiddenState>* last, const ForwardOptions& opts) {
  Unrolled u = unroll_forward(model.cell(), model.params(), batch, carry, opts.unroll);
  NllResult res = head_pass(model, batch, u.cache, opts, nullptr, 0.0, nullptr);
  if (last != nullptr) *last = std::move(u.last);
  return res;
}

NllResult forward_backward(const LMModel& model, const Batch& batch, const std::vector<HiddenState>& carry,
                           Gradients& grads, double loss_scale, std::vector<HiddenState>* last,
                           const ForwardOptions& opts) {
  Unrolled u = unroll_forward(model.cell(), model.params(), batch, carry, opts.unroll);
  std::vector<Tensor> target_grads(batch.lanes * batch.steps);
  NllResult res = head_pass(model, batch, u.cache, opts, &grads, loss_scale, &target_grads);
  backward(model.cell(), model.params(), u.cache, target_grads, grads);
  if (last != nullptr) *last = std::move(u.last);
  return res;
}

EvalReport metrics(double nll, std::size_t tokens) {
  if (tokens == 0) throw DataError("metrics: no tokens were scored");
  if (!std::isfinite(nll)) throw NumericError("metrics: NLL is not finite");
  EvalReport r;
  r.nll = nll;
  r.tokens = tokens;
  const double mean = nll / static_cast<double>(tokens);
  r.ppl = std::exp(mean);
  r.bpc = mean / std::numbers::ln2;
  return r;
}

std::string_view to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::static_eval: return "static";
    case SchemeKind::dynamic_1: return "dyn1";
    case SchemeKind::dynamic_2: return "dyn2";
  }
  return "?";
}

SchemeKind parse_scheme(std::string_view s) {
  if (s == "static") return SchemeKind::static_eval;
  if (s == "dyn1" || s == "dynamic_1") return SchemeKind::dynamic_1;
  if (s == "dyn2" || s == "dynamic_2") return SchemeKind::dynamic_2;
  throw ConfigError("unknown evaluation scheme '" + std::string(s) + "' (valid: static, dyn1, dyn2)");
}

void DynamicScheme::validate() const {
  if (!(step >= 0.0) || !std::isfinite(step)) throw ConfigError("dynamic evaluation step must be >= 0");
}

EvalReport evaluate(const LMModel& model, const std::vector<std::vector<std::int32_t>>& test,
                    const DynamicScheme& scheme, const EvalOptions& opts,
                    const std::vector<std::vector<std::int32_t>>* valid) {
  scheme.validate();
  if (scheme.kind == SchemeKind::dynamic_2 && valid == nullptr) {
    throw ConfigError("dynamic_2 evaluation needs a validation split");
  }
  LMModel local = model;
  const bool adapt = scheme.kind != SchemeKind::static_eval;
  std::vector<double> trace;
  std::size_t unit = 0;

  auto run = [&](const std::vector<std::vector<std::int32_t>>& seqs, bool score, NllResult& total) {
    const std::vector<Batch> batches = batchify(seqs, opts.eos, opts.batching);
    std::vector<HiddenState> carry;
    for (const Batch& batch : batches) {
      ForwardOptions fo;
      if (score && opts.keep_trace) fo.token_logprobs = &trace;
      if (score && opts.on_predict) {
        fo.on_predict = [&, u = unit](std::size_t lane, std::size_t step) { opts.on_predict(u, lane, step); };
      }
      std::vector<HiddenState> last;
      NllResult r;
      if (!adapt) {
        r = sequence_nll(local, batch, carry, &last, fo);
      } else {
        Gradients g{local.params().zeros_like(), {}};
        r = forward_backward(local, batch, carry, g, 1.0, &last, fo);
        if (scheme.clip > 0.0) clip_gradients(g.params, ClipConfig{scheme.clip, ClipMode::global_norm});
        if (opts.on_update) opts.on_update(unit);
        sgd_update(local.params(), g.params, scheme.step);
        if (!local.params().all_finite()) throw NumericError("dynamic evaluation produced non-finite parameters");
      }
      if (score) {
        total.nll += r.nll;
        total.tokens += r.tokens;
      }
      carry = std::move(last);
      ++unit;
    }
  };

  NllResult discarded, total;
  if (scheme.kind == SchemeKind::dynamic_2) run(*valid, false, discarded);
  run(test, true, total);
  EvalReport rep = metrics(total.nll, total.tokens);
  rep.token_logprobs = std::move(trace);
  if (opts.adapted != nullptr) *opts.adapted = local.params();
  return rep;
}

}  // namespace dsf
