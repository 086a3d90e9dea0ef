#include "dsf/analysis.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <ostream>

namespace dsf {

std::vector<double> minmax_scores(const std::vector<double>& raw) {
  std::vector<double> out(raw.size(), 0.0);
  if (raw.empty()) return out;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / range;
  return out;
}

DeltaTrace delta_trace(const LMModel& model, const std::vector<std::int32_t>& tokens) {
  if (tokens.empty()) throw DataError("delta_trace: empty token sequence");
  const Cell& cell = model.cell();
  const ParamSet& p = model.params();
  HiddenState state = cell.step(p, InputVec::null_start(), cell.zero_state(), nullptr, nullptr);
  DeltaTrace tr;
  tr.tokens = tokens;
  tr.l1_values.reserve(tokens.size());
  for (std::int32_t id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.vocab_size()) {
      throw DataError("delta_trace: token id " + std::to_string(id) + " outside vocabulary");
    }
    HiddenState next = cell.step(p, InputVec::token(id), state, nullptr, nullptr);
    tr.l1_values.push_back(l1_distance(next.h.span(), state.h.span()));
    state = std::move(next);
  }
  tr.scores = minmax_scores(tr.l1_values);
  return tr;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_trace_csv(std::ostream& out, const DeltaTrace& trace, const Vocab& vocab) {
  out << "token,raw_l1,score\n" << std::setprecision(17);
  for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
    out << csv_field(vocab.token(trace.tokens[i])) << ',' << trace.l1_values[i] << ',' << trace.scores[i] << '\n';
  }
}

void write_trace_svg(std::ostream& out, const DeltaTrace& trace, const Vocab& vocab) {
  const double bar = 28.0, height = 160.0, base = 190.0;
  const double width = 20.0 + bar * static_cast<double>(trace.tokens.size());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"240\">\n";
  for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
    const double x = 10.0 + bar * static_cast<double>(i);
    const double h = height * trace.scores[i];
    out << "  <rect x=\"" << x + 2 << "\" y=\"" << base - h << "\" width=\"" << bar - 4 << "\" height=\"" << h
        << "\" fill=\"#4a78b5\"/>\n";
    out << "  <text x=\"" << x + bar / 2 << "\" y=\"" << base + 16
        << "\" font-size=\"10\" text-anchor=\"middle\" transform=\"rotate(45 " << x + bar / 2 << ' ' << base + 16
        << ")\">" << xml_escape(vocab.token(trace.tokens[i])) << "</text>\n";
  }
  out << "</svg>\n";
}

DecileContrast decile_contrast(const std::vector<DeltaTrace>& traces, const std::vector<std::uint64_t>& frequency) {
  std::map<std::int32_t, std::pair<double, std::size_t>> by_type;
  for (const auto& tr : traces) {
    for (std::size_t i = 0; i < tr.tokens.size(); ++i) {
      auto& acc = by_type[tr.tokens[i]];
      acc.first += tr.scores[i];
      acc.second += 1;
    }
  }
  if (by_type.empty()) throw DataError("decile_contrast: no tokens");
  std::vector<std::int32_t> types;
  for (const auto& [id, acc] : by_type) {
    if (id < 0 || static_cast<std::size_t>(id) >= frequency.size()) {
      throw DataError("decile_contrast: no frequency for token id " + std::to_string(id));
    }
    types.push_back(id);
  }
  std::sort(types.begin(), types.end(), [&](std::int32_t a, std::int32_t b) {
    const auto fa = frequency[static_cast<std::size_t>(a)], fb = frequency[static_cast<std::size_t>(b)];
    return fa != fb ? fa > fb : a < b;
  });
  const std::size_t k = std::max<std::size_t>(1, types.size() / 10);
  DecileContrast c;
  double top = 0.0, bottom = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    c.top_types.push_back(types[i]);
    c.bottom_types.push_back(types[types.size() - 1 - i]);
    const auto& hi = by_type[types[i]];
    top += hi.first;
    c.top_count += hi.second;
    const auto& lo = by_type[types[types.size() - 1 - i]];
    bottom += lo.first;
    c.bottom_count += lo.second;
  }
  c.top_mean = top / static_cast<double>(c.top_count);
  c.bottom_mean = bottom / static_cast<double>(c.bottom_count);
  return c;
}

}  // namespace dsf
