#include "dsf/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dsf/checkpoint.hpp"

namespace dsf {

const std::vector<std::string>& cell_names() {
  static const std::vector<std::string> names{"delta", "delta-first", "delta-second", "delta-ln", "delta-sum", "elman",
                                              "mi-rnn", "scrn",        "gru",          "mgu",      "lstm"};
  return names;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expect) {
  throw ConfigError("config key '" + key + "': '" + value + "' is not " + expect);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string fmt(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt_opt(const std::optional<bool>& b) { return b ? (*b ? "true" : "false") : "auto"; }

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  try {
    if (key == "mode") mode = parse_token_mode(v);
    else if (key == "cell") {
      if (std::find(cell_names().begin(), cell_names().end(), v) == cell_names().end()) {
        std::string valid;
        for (const auto& n : cell_names()) valid += (valid.empty() ? "" : ", ") + n;
        throw ConfigError("unknown cell '" + v + "' (valid: " + valid + ")");
      }
      cell = v;
    } else if (key == "gate") {
      if (!v.empty() && v != "data" && v != "bias" && v != "fixed") bad_value(key, v, "one of data, bias, fixed");
      gate = v;
    } else if (key == "gate_rate") gate_rate = to_double(key, v);
    else if (key == "phi_inner") phi_inner = parse_activation(v);
    else if (key == "phi_outer") {
      if (v == "auto" || v.empty()) phi_outer.reset();
      else phi_outer = parse_activation(v);
    } else if (key == "hidden") hidden = to_uint(key, v);
    else if (key == "batch") batch = to_uint(key, v);
    else if (key == "unroll") unroll = to_uint(key, v);
    else if (key == "layout") {
      if (v == "auto" || v.empty()) layout.reset();
      else if (v == "continuous") layout = BatchLayout::continuous;
      else if (v == "padded") layout = BatchLayout::padded;
      else bad_value(key, v, "one of continuous, padded, auto");
    } else if (key == "epochs") epochs = static_cast<int>(to_uint(key, v));
    else if (key == "lr") lr = to_double(key, v);
    else if (key == "lr_grid") {
      lr_grid.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!trim(item).empty()) lr_grid.push_back(to_double(key, trim(item)));
      }
    } else if (key == "lr_floor") lr_floor = to_double(key, v);
    else if (key == "sigma") sigma = to_double(key, v);
    else if (key == "clip") clip = to_double(key, v);
    else if (key == "clip_mode") {
      if (v == "global") clip_mode = ClipMode::global_norm;
      else if (v == "elementwise") clip_mode = ClipMode::elementwise;
      else bad_value(key, v, "one of global, elementwise");
    } else if (key == "dropout") {
      if (v == "auto" || v.empty()) dropout.reset();
      else dropout = to_double(key, v);
    } else if (key == "seed") seed = to_uint(key, v);
    else if (key == "lookahead") lookahead = static_cast<int>(to_uint(key, v));
    else if (key == "scheme") scheme = parse_scheme(v);
    else if (key == "step") step = to_double(key, v);
    else if (key == "dyn_clip") dyn_clip = to_double(key, v);
    else if (key == "eval_unroll") eval_unroll = to_uint(key, v);
    else if (key == "polyak") polyak = v == "auto" ? std::nullopt : std::optional<bool>(to_bool(key, v));
    else if (key == "inference") inference = v == "auto" ? std::nullopt : std::optional<bool>(to_bool(key, v));
    else if (key == "inference_step") inference_step = to_double(key, v);
    else if (key == "min_freq") min_freq = to_uint(key, v);
    else if (key == "max_vocab") max_vocab = to_uint(key, v);
    else if (key == "vowels") vowels = v;
    else if (key == "dtype") dtype = std::string(to_string(parse_dtype(v)));
    else if (key == "train") train_path = v;
    else if (key == "valid") valid_path = v;
    else if (key == "test") test_path = v;
    else if (key == "vocab") vocab_path = v;
    else if (key == "out") out_dir = v;
    else if (key == "checkpoint") checkpoint_path = v;
    else if (key == "metrics") metrics_path = v;
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

void RunConfig::apply_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  c.apply_text(ss.str(), path);
  return c;
}

void RunConfig::validate() const {
  if (hidden < 1) throw ConfigError("hidden must be >= 1");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (unroll < 1) throw ConfigError("unroll must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  for (double g : lr_grid) {
    if (!(g > 0.0)) throw ConfigError("lr_grid entries must be > 0");
  }
  if (!(lr_floor > 0.0)) throw ConfigError("lr_floor must be > 0");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
  ClipConfig{clip, clip_mode}.validate();
  const double p = dropout_p();
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (lookahead < 1) throw ConfigError("lookahead must be >= 1");
  DynamicScheme{scheme, step, dyn_clip}.validate();
  if (!(inference_step >= 0.0)) throw ConfigError("inference_step must be >= 0");
  if (!(gate_rate >= 0.0 && gate_rate <= 1.0)) throw ConfigError("gate_rate must be in [0, 1]");
  subword_rules().validate();
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::string grid;
  for (double g : lr_grid) grid += (grid.empty() ? "" : ",") + fmt(g);
  return {
      {"mode", std::string(to_string(mode))},
      {"cell", cell},
      {"gate", gate},
      {"gate_rate", fmt(gate_rate)},
      {"phi_inner", std::string(to_string(phi_inner))},
      {"phi_outer", phi_outer ? std::string(to_string(*phi_outer)) : "auto"},
      {"hidden", std::to_string(hidden)},
      {"batch", std::to_string(batch)},
      {"unroll", std::to_string(unroll)},
      {"layout", !layout ? "auto" : *layout == BatchLayout::padded ? "padded" : "continuous"},
      {"epochs", std::to_string(epochs)},
      {"lr", fmt(lr)},
      {"lr_grid", grid},
      {"lr_floor", fmt(lr_floor)},
      {"sigma", fmt(sigma)},
      {"clip", fmt(clip)},
      {"clip_mode", clip_mode == ClipMode::global_norm ? "global" : "elementwise"},
      {"dropout", dropout ? fmt(*dropout) : "auto"},
      {"seed", std::to_string(seed)},
      {"lookahead", std::to_string(lookahead)},
      {"scheme", std::string(to_string(scheme))},
      {"step", fmt(step)},
      {"dyn_clip", fmt(dyn_clip)},
      {"eval_unroll", std::to_string(eval_unroll)},
      {"polyak", fmt_opt(polyak)},
      {"inference", fmt_opt(inference)},
      {"inference_step", fmt(inference_step)},
      {"min_freq", std::to_string(min_freq)},
      {"max_vocab", std::to_string(max_vocab)},
      {"vowels", vowels},
      {"dtype", dtype},
      {"train", train_path},
      {"valid", valid_path},
      {"test", test_path},
      {"vocab", vocab_path},
      {"out", out_dir},
      {"checkpoint", checkpoint_path},
      {"metrics", metrics_path},
  };
}

std::string RunConfig::echo() const {
  std::string s;
  for (const auto& [k, v] : entries()) s += k + "=" + v + "\n";
  return s;
}

double RunConfig::dropout_p() const {
  if (dropout) return *dropout;
  return mode == TokenMode::word ? 0.5 : 0.15;
}

SubwordRules RunConfig::subword_rules() const {
  SubwordRules r;
  r.vowels = vowels;
  r.min_frequency = min_freq;
  return r;
}

VocabOptions RunConfig::vocab_options() const {
  VocabOptions o;
  o.min_frequency = min_freq;
  o.max_size = max_vocab;
  return o;
}

std::string RunConfig::resolved_checkpoint() const {
  if (!checkpoint_path.empty()) return checkpoint_path;
  return (out_dir.empty() ? std::string(".") : out_dir) + "/model.dsf";
}

std::string RunConfig::resolved_metrics() const {
  if (!metrics_path.empty()) return metrics_path;
  return (out_dir.empty() ? std::string(".") : out_dir) + "/metrics.jsonl";
}

AnyCellSpec RunConfig::cell_spec(std::size_t vocab_size) const {
  if (auto kind = parse_baseline_kind(cell)) {
    if (!gate.empty()) throw ConfigError("gate applies to delta cells only, not '" + cell + "'");
    BaselineSpec s = BaselineSpec::of(*kind, hidden, vocab_size);
    s.phi_inner = phi_inner;
    if (phi_outer) s.phi_outer = *phi_outer;
    s.validate();
    return s;
  }
  CellSpec s = CellSpec::delta_full(hidden, vocab_size);
  if (cell == "delta-first") s.inner_form = InnerForm::first_order;
  else if (cell == "delta-second") s.inner_form = InnerForm::second_order;
  else if (cell == "delta-ln") s.layer_norm = true;
  else if (cell == "delta-sum") s.outer_form = OuterForm::sum;
  else if (cell != "delta") throw ConfigError("unknown cell '" + cell + "'");
  if (gate == "bias") s.gate_form = GateForm::bias_only();
  else if (gate == "fixed") s.gate_form = GateForm::fixed(Tensor(hidden, gate_rate));
  s.phi_inner = phi_inner;
  if (phi_outer) s.phi_outer = *phi_outer;
  s.dropout_p = dropout_p();
  s.validate();
  return s;
}

}  // namespace dsf
