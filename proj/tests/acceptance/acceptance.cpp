// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Usage: acceptance [corpus_dir] [--only N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsf/analysis.hpp"
#include "dsf/train.hpp"
#include "oracle.hpp"

#ifndef DSF_DATA_DIR
#define DSF_DATA_DIR "data"
#endif

namespace {

using namespace dsf;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  std::size_t checks = 0;
  for (const auto& c : testing::gradient_check_cases(8, 12)) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const testing::GradCheck g = testing::check_model_gradient(c.spec, 8, 12, 2, 6, seed);
      ++checks;
      if (g.max_rel_error > worst) {
        worst = g.max_rel_error;
        where = c.label + " seed " + std::to_string(seed) + " " + g.worst;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120.0,
          fmt("%zu checks, max rel error %.3g (%s), %.1f s", checks, worst, where.c_str(), secs)};
}

Outcome parameter_counts() {
  bool ok = true;
  std::ostringstream lstm;
  Rng rng(RngSeed{1});
  for (std::size_t h : {1u, 7u, 100u}) {
    for (std::size_t v : {1u, 13u, 2405u}) {
      const std::vector<std::pair<CountArch, AnyCellSpec>> arch{
          {CountArch::delta_full, CellSpec::delta_full(h, v)},
          {CountArch::elman, BaselineSpec::of(BaselineKind::elman, h, v)},
          {CountArch::gru, BaselineSpec::of(BaselineKind::gru, h, v)}};
      for (const auto& [a, spec] : arch) {
        const LMModel m(spec, v, TokenMode::word, 0.1, rng);
        if (m.params().element_count() != count_params(a, h, v)) {
          ok = false;
          std::cout << "  census mismatch: " << to_string(a) << " H=" << h << " V=" << v << '\n';
        }
      }
      const LMModel l(BaselineSpec::of(BaselineKind::lstm_peephole, h, v), v, TokenMode::word, 0.1, rng);
      if (h == 100 && v == 2405) {
        lstm << "lstm_peephole H=100 V=2405: closed form " << count_params(CountArch::lstm_peephole, h, v)
             << ", census " << l.params().element_count();
      }
      const auto d = count_params(CountArch::delta_full, h, v);
      ok = ok && d < count_params(CountArch::gru, h, v) &&
           count_params(CountArch::gru, h, v) < count_params(CountArch::lstm_peephole, h, v) &&
           d - count_params(CountArch::elman, h, v) == 4 * h;
    }
  }
  return {ok, "delta_full/elman/gru census = closed form on 9 grid points; orderings hold; " + lstm.str() +
                  " (closed form not realisable, see README)"};
}

Outcome reductions() {
  Rng rng(RngSeed{2024});
  double e1 = 0.0, e2 = 0.0, e3 = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    CellSpec s = CellSpec::delta_full(8, 12);
    ParamSet p;
    p.add("W", gaussian_init({8, 12}, 1.0, rng));
    p.add("V", gaussian_init({8, 8}, 1.0, rng));
    p.add("b", gaussian_init({8}, 1.0, rng));
    p.add("alpha", Tensor(8, 0.0));
    p.add("beta1", Tensor(8, 1.0));
    p.add("beta2", Tensor(8, 1.0));
    const Tensor h = gaussian_init({8}, 1.0, rng);
    const auto x = InputVec::token(static_cast<std::int32_t>(rng.uniform_index(12)));
    const Tensor a = inner_second_order(s, p, x, h, true);
    const Tensor b = inner_first_order(s, p, x, h);
    for (std::size_t i = 0; i < 8; ++i) e1 = std::max(e1, std::abs(a[i] - b[i]));
  }
  {
    CellSpec d = CellSpec::delta_full(8, 12);
    d.inner_form = InnerForm::first_order;
    d.outer_form = OuterForm::late_integration;
    d.phi_outer = Activation::identity;
    d.gate_form = GateForm::fixed(Tensor(8, 0.0));
    const CellPtr dc = make_cell(d);
    const CellPtr ec = make_cell(BaselineSpec::of(BaselineKind::elman, 8, 12));
    const ParamSet p = init_params(*dc, rng, 0.5);
    HiddenState s1{gaussian_init({8}, 1.0, rng), {}, {}}, s2 = s1;
    for (int t = 0; t < 100; ++t) {
      const auto x = InputVec::token(static_cast<std::int32_t>(rng.uniform_index(12)));
      s1 = dc->step(p, x, s1, nullptr, nullptr);
      s2 = ec->step(p, x, s2, nullptr, nullptr);
      for (std::size_t i = 0; i < 8; ++i) e2 = std::max(e2, std::abs(s1.h[i] - s2.h[i]));
    }
  }
  for (auto outer : {OuterForm::interpolate, OuterForm::late_integration}) {
    CellSpec s = CellSpec::delta_full(8, 12);
    s.outer_form = outer;
    s.gate_form = GateForm::fixed(Tensor(8, 1.0));
    const CellPtr c = make_cell(s);
    const ParamSet p = init_params(*c, rng, 1.0);
    const HiddenState h0{gaussian_init({8}, 1.0, rng), {}, {}};
    HiddenState h = h0;
    for (int t = 0; t < 100; ++t) {
      h = c->step(p, InputVec::token(static_cast<std::int32_t>(rng.uniform_index(12))), h, nullptr, nullptr);
      for (std::size_t i = 0; i < 8; ++i) e3 = std::max(e3, std::abs(h.h[i] - h0.h[i]));
    }
  }
  return {e1 <= 1e-12 && e2 <= 1e-12 && e3 <= 1e-12,
          fmt("general->first %.2g, late(r=0)->elman %.2g, r=1 hold %.2g", e1, e2, e3)};
}

Outcome metric_identities() {
  bool ok = true;
  std::string detail;
  for (std::size_t V : {49u, 10000u}) {
    Rng rng(RngSeed{V});
    LMModel m(CellSpec::delta_full(4, V), V, TokenMode::character, 0.1, rng);
    m.params()[m.head_weight_index()].fill(0.0);
    testing::random_batch(3, 40, V, rng);
    const Batch b = testing::random_batch(3, 40, V, rng);
    const NllResult r = sequence_nll(m, b, {});
    const EvalReport rep = metrics(r.nll, r.tokens);
    const double ppl_err = std::abs(rep.ppl - static_cast<double>(V)) / static_cast<double>(V);
    const double bpc_err = std::abs(rep.bpc - std::log2(static_cast<double>(V)));
    ok = ok && ppl_err <= 1e-12 && bpc_err <= 1e-9;
    detail += fmt("V=%zu ppl rel err %.2g bpc err %.2g; ", V, ppl_err, bpc_err);
  }
  Rng rng(RngSeed{4});
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const EvalReport r = metrics(1e4 * rng.uniform(), 1 + rng.uniform_index(5000));
    worst = std::max(worst, std::abs(r.bpc - std::log(r.ppl) / std::numbers::ln2));
  }
  ok = ok && worst <= 1e-12;
  return {ok, detail + fmt("bpc vs ln(ppl)/ln2 max err %.2g over 1000 reports", worst)};
}

Outcome overfit() {
  const auto t0 = Clock::now();
  const std::string unit = "the quick brown fox jumps over the lazy dog. ";
  std::string text;
  while (text.size() < 1000) text += unit;
  text.resize(1000);
  Corpora data;
  data.vocab = Vocab::build({text}, TokenMode::character);
  data.train = {data.vocab.encode_line(text)};
  data.valid = data.train;
  RunConfig cfg;
  cfg.hidden = 32;
  cfg.unroll = 16;
  cfg.batch = 4;
  cfg.epochs = 200;
  cfg.lr = 0.01;
  cfg.dropout = 0.0;
  cfg.lookahead = 200;
  int reached = -1;
  double best = 1e9;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) {
    if (m.split != "valid") return;
    best = std::min(best, m.bpc);
    if (reached < 0 && m.bpc < 0.1) reached = m.epoch;
  };
  train(cfg, data, hooks);
  const double secs = seconds_since(t0);
  return {reached > 0 && secs < 120.0, fmt("BPC < 0.1 at epoch %d, best %.4f, %.1f s", reached, best, secs)};
}

// ---------------------------------------------------------------------------
// Criteria 6, 7 and 9 share the trained models.

struct CorpusRun {
  Corpora data;
  std::vector<LMModel> delta;
  std::vector<double> delta_bpc, elman_bpc;
  std::size_t delta_h = 0, elman_h = 0, delta_params = 0, elman_params = 0;
  double seconds = 0.0;
};

RunConfig corpus_config() {
  RunConfig cfg;
  cfg.mode = TokenMode::character;
  cfg.batch = 16;
  cfg.unroll = 50;
  cfg.epochs = 25;
  cfg.lr = 0.004;
  cfg.dropout = 0.0;
  cfg.lookahead = 3;
  return cfg;
}

std::size_t census(const AnyCellSpec& spec, std::size_t V) {
  Rng rng(RngSeed{1});
  return LMModel(spec, V, TokenMode::character, 0.1, rng).params().element_count();
}

CorpusRun corpus_run(const std::string& dir) {
  const auto t0 = Clock::now();
  CorpusRun run;
  RunConfig cfg = corpus_config();
  cfg.train_path = dir + "/train.txt";
  cfg.valid_path = dir + "/valid.txt";
  cfg.test_path = dir + "/test.txt";
  run.data = load_corpora(cfg);
  const std::size_t V = run.data.vocab.size();

  // Smallest hidden sizes near 96 whose live censuses agree within 1%.
  for (std::size_t hd = 96; hd < 128 && run.delta_h == 0; ++hd) {
    const std::size_t pd = census(CellSpec::delta_full(hd, V), V);
    for (std::size_t he = hd; he < hd + 16; ++he) {
      const std::size_t pe = census(BaselineSpec::of(BaselineKind::elman, he, V), V);
      if (std::abs(static_cast<double>(pe) - static_cast<double>(pd)) <= 0.01 * static_cast<double>(pd)) {
        run.delta_h = hd;
        run.elman_h = he;
        run.delta_params = pd;
        run.elman_params = pe;
        break;
      }
    }
  }
  if (run.delta_h == 0) throw ConfigError("no parameter-matched hidden sizes found");

  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (const char* cell : {"delta", "elman"}) {
      RunConfig c = cfg;
      c.cell = cell;
      c.seed = seed;
      c.hidden = std::string(cell) == "delta" ? run.delta_h : run.elman_h;
      const TrainResult r = train(c, run.data);
      const LMModel m(c.cell_spec(V), V, TokenMode::character, r.best_params);
      const double bpc = evaluate_split(m, c, run.data.valid).bpc;
      std::cout << "  " << cell << " H=" << c.hidden << " seed " << seed << ": valid BPC " << bpc << " after "
                << r.epochs_run << " epochs\n";
      if (std::string(cell) == "delta") {
        run.delta.push_back(m);
        run.delta_bpc.push_back(bpc);
      } else {
        run.elman_bpc.push_back(bpc);
      }
    }
  }
  run.seconds = seconds_since(t0);
  return run;
}

Outcome directional(const CorpusRun& run) {
  const double d = median(run.delta_bpc), e = median(run.elman_bpc);
  return {d <= e && run.seconds <= 1800.0,
          fmt("median valid BPC delta(H=%zu, %zu params) %.4f vs elman(H=%zu, %zu params) %.4f, %.0f s", run.delta_h,
              run.delta_params, d, run.elman_h, run.elman_params, e, run.seconds)};
}

Outcome dynamic_eval(const CorpusRun& run) {
  bool ok = true;
  std::string detail;
  EvalOptions o;
  o.batching = BatchOptions{1, 50, BatchLayout::continuous, true};
  for (std::size_t i = 0; i < run.delta.size(); ++i) {
    const EvalReport s = evaluate(run.delta[i], run.data.test, DynamicScheme{SchemeKind::static_eval}, o);
    const EvalReport d = evaluate(run.delta[i], run.data.test, DynamicScheme{SchemeKind::dynamic_1}, o);
    ok = ok && d.nll <= s.nll;
    detail += fmt("seed %zu static %.1f dyn1 %.1f nats; ", i + 1, s.nll, d.nll);
  }
  // Three-token instrumentation: every prediction precedes its update.
  std::vector<std::string> events;
  EvalOptions io;
  io.batching = BatchOptions{1, 1, BatchLayout::continuous, true};
  io.on_predict = [&](std::size_t u, std::size_t, std::size_t) { events.push_back("p" + std::to_string(u)); };
  io.on_update = [&](std::size_t u) { events.push_back("u" + std::to_string(u)); };
  evaluate(run.delta.front(), {{1, 2}}, DynamicScheme{SchemeKind::dynamic_1}, io);
  const std::vector<std::string> expect{"p0", "u0", "p1", "u1"};
  ok = ok && events == expect;
  detail += "ordering " + std::string(events == expect ? "p0 u0 p1 u1" : "VIOLATED");
  return {ok, detail};
}

Outcome subword(const std::string& dir) {
  const auto lines = read_lines(dir + "/test.txt");
  SubwordRules rules;
  std::size_t words = 0, bad_trip = 0, bad_len = 0;
  std::vector<std::string> normalized;
  for (const auto& line : lines) {
    std::string norm;
    for (char ch : line) {
      const unsigned char c = static_cast<unsigned char>(ch);
      if (std::isalpha(c)) norm += static_cast<char>(std::tolower(c));
      else if (std::isspace(c)) norm += ' ';
    }
    normalized.push_back(norm);
    std::istringstream raw(line + " " + norm);
    std::string w;
    while (raw >> w) {
      ++words;
      std::string joined;
      const auto parts = partition_word(w, rules);
      for (const auto& p : parts) {
        joined += p;
        if (w.size() >= 2 && p.size() < 2) ++bad_len;
      }
      if (joined != w) ++bad_trip;
    }
  }
  bool vocab_ok = true;
  for (std::uint64_t threshold : {1u, 2u, 5u, 20u}) {
    SubwordRules r;
    r.min_frequency = threshold;
    std::map<std::string, std::uint64_t> counts;
    for (const auto& l : normalized) {
      for (const auto& t : tokenize_line(l, TokenMode::subword, r)) ++counts[t];
    }
    std::set<std::string> expect{std::string(kEosToken)};
    for (char c = 'a'; c <= 'z'; ++c) expect.insert(std::string(1, c));
    for (const auto& [t, n] : counts) {
      if (n >= threshold) expect.insert(t);
    }
    const Vocab v = Vocab::build(normalized, TokenMode::subword, r);
    std::set<std::string> got;
    for (std::size_t i = 0; i < v.size(); ++i) got.insert(v.token(static_cast<std::int32_t>(i)));
    vocab_ok = vocab_ok && got == expect && v.size() == expect.size();
  }
  return {bad_trip == 0 && bad_len == 0 && vocab_ok,
          fmt("%zu words: %zu round-trip failures, %zu short pieces; vocabulary sets %s", words, bad_trip, bad_len,
              vocab_ok ? "exact at thresholds 1,2,5,20" : "WRONG")};
}

Outcome delta_trace_contrast(const CorpusRun& run) {
  std::vector<std::uint64_t> freq(run.data.vocab.size());
  for (std::size_t i = 0; i < freq.size(); ++i) freq[i] = run.data.vocab.frequency(static_cast<std::int32_t>(i));
  std::vector<double> top, bottom;
  std::string types;
  for (const auto& m : run.delta) {
    std::vector<DeltaTrace> traces;
    for (const auto& line : run.data.test) {
      if (line.size() >= 2) traces.push_back(delta_trace(m, line));
    }
    const DecileContrast c = decile_contrast(traces, freq);
    top.push_back(c.top_mean);
    bottom.push_back(c.bottom_mean);
    if (types.empty()) {
      types = "; top types";
      for (auto id : c.top_types) types += " '" + run.data.vocab.token(id) + "'";
      types += ", bottom types";
      for (auto id : c.bottom_types) types += " '" + run.data.vocab.token(id) + "'";
    }
  }
  const double t = median(top), b = median(bottom);
  return {t < b, fmt("median top-decile score %.4f vs bottom-decile %.4f", t, b) + types};
}

std::string strip_wall(const std::string& stream) {
  std::istringstream in(stream);
  std::string line, out;
  while (std::getline(in, line)) {
    auto j = nlohmann::ordered_json::parse(line);
    j.erase("wall_seconds");
    out += j.dump() + "\n";
  }
  return out;
}

Outcome engineering() {
  std::string detail;
  bool ok = true;
  // Checkpoint round trip.
  {
    Rng rng(RngSeed{10});
    const LMModel m = testing::random_model(CellSpec::delta_full(8, 12), 8, 12, rng);
    const std::string path = (std::filesystem::temp_directory_path() / "dsf_acceptance.dsf").string();
    RunConfig cfg;
    cfg.hidden = 8;
    save_model(path, cfg, m.params());
    const LMModel back(m.spec(), 12, TokenMode::character, load_checkpoint(path).params);
    std::filesystem::remove(path);
    const Batch b = testing::random_batch(3, 9, 12, rng);
    std::vector<HiddenState> l1, l2;
    std::vector<double> t1, t2;
    ForwardOptions f1, f2;
    f1.token_logprobs = &t1;
    f2.token_logprobs = &t2;
    sequence_nll(m, b, {}, &l1, f1);
    sequence_nll(back, b, {}, &l2, f2);
    bool same = t1 == t2;
    for (std::size_t i = 0; i < l1.size(); ++i) same = same && l1[i].bitwise_equal(l2[i]);
    ok = ok && same;
    detail += std::string("checkpoint ") + (same ? "bitwise" : "DIFFERS");
  }
  // Metrics stream reproducibility.
  {
    const std::string text = "a stream of text with some repetition, a stream of text with some variety.";
    Corpora data;
    data.vocab = Vocab::build({text}, TokenMode::character);
    data.train = {data.vocab.encode_line(text), data.vocab.encode_line(text)};
    data.valid = {data.vocab.encode_line(text)};
    RunConfig cfg;
    cfg.hidden = 12;
    cfg.batch = 2;
    cfg.unroll = 8;
    cfg.epochs = 4;
    cfg.dropout = 0.15;
    std::ostringstream s1, s2;
    s1 << config_json(cfg) << '\n';
    s2 << config_json(cfg) << '\n';
    TrainHooks h1, h2;
    h1.metrics = &s1;
    h2.metrics = &s2;
    train(cfg, data, h1);
    train(cfg, data, h2);
    const bool same = strip_wall(s1.str()) == strip_wall(s2.str());
    ok = ok && same;
    detail += std::string("; metrics stream ") + (same ? "reproduced (wall_seconds excluded)" : "DIFFERS");
  }
  // dropout_p = 0 against no dropout.
  {
    Rng rng(RngSeed{11});
    CellSpec spec = CellSpec::delta_full(8, 12);
    const LMModel a = testing::random_model(spec, 8, 12, rng);
    spec.dropout_p = 0.0;
    const Batch b = testing::random_batch(2, 6, 12, rng);
    Gradients g1{a.params().zeros_like(), {}}, g2{a.params().zeros_like(), {}};
    Rng drop(RngSeed{3});
    ForwardOptions with;
    with.unroll.dropout_rng = &drop;
    const NllResult r1 = forward_backward(a, b, {}, g1, 1.0, nullptr, with);
    const NllResult r2 = forward_backward(a, b, {}, g2, 1.0);
    const bool same = r1.nll == r2.nll && g1.params.bitwise_equal(g2.params);
    ok = ok && same;
    detail += std::string("; dropout 0 ") + (same ? "bitwise" : "DIFFERS");
  }
  // Clipping.
  {
    Rng rng(RngSeed{12});
    double worst = 0.0;
    bool idem = true;
    for (int i = 0; i < 500; ++i) {
      ParamSet g;
      const double scale = std::pow(10.0, 6.0 * rng.uniform() - 2.0);
      g.add("a", gaussian_init({7, 5}, scale, rng));
      g.add("b", gaussian_init({9}, scale, rng));
      clip_gradients(g, ClipConfig{5.0, ClipMode::global_norm});
      worst = std::max(worst, global_norm(g));
      ParamSet again = g;
      clip_gradients(again, ClipConfig{5.0, ClipMode::global_norm});
      idem = idem && again.bitwise_equal(g);
    }
    const bool good = idem && worst <= 5.0 + 1e-12;
    ok = ok && good;
    detail += fmt("; clip idempotent %s, max norm after clip %.15g", idem ? "yes" : "NO", worst);
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::string dir = std::string(DSF_DATA_DIR) + "/corpus";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only.insert(std::stoi(argv[++i]));
    } else {
      dir = a;
    }
  }
  auto wanted = [&](int n) { return only.empty() || only.contains(n); };

  int failures = 0;
  auto report = [&](int n, const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(n)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << name << "): " << o.detail << std::endl;
  };

  report(1, "gradient correctness", gradient_correctness);
  report(2, "parameter-count audit", parameter_counts);
  report(3, "reduction equivalences", reductions);
  report(4, "metric identities", metric_identities);
  report(5, "overfit sanity", overfit);

  std::optional<CorpusRun> run;
  std::string run_error;
  if (wanted(6) || wanted(7) || wanted(9)) {
    try {
      run = corpus_run(dir);
    } catch (const std::exception& e) {
      run_error = e.what();
    }
  }
  auto with_run = [&](const std::function<Outcome(const CorpusRun&)>& fn) {
    return [&, fn]() -> Outcome {
      if (!run) return {false, "corpus run failed: " + run_error};
      return fn(*run);
    };
  };
  report(6, "directional comparison", with_run(directional));
  report(7, "dynamic evaluation", with_run(dynamic_eval));
  report(8, "subword partitioner", [&] { return subword(dir); });
  report(9, "delta-trace contrast", with_run(delta_trace_contrast));
  report(10, "engineering invariants", engineering);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
