#include "dsf/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace dsf {

std::string_view to_string(TokenMode m) {
  switch (m) {
    case TokenMode::word: return "word";
    case TokenMode::character: return "char";
    case TokenMode::subword: return "subword";
  }
  return "?";
}

TokenMode parse_token_mode(std::string_view s) {
  if (s == "word") return TokenMode::word;
  if (s == "char" || s == "character") return TokenMode::character;
  if (s == "subword") return TokenMode::subword;
  throw ConfigError("unknown mode '" + std::string(s) + "' (valid: word, char, subword)");
}

void SubwordRules::validate() const {
  if (vowels.empty()) throw ConfigError("subword rules: vowel set is empty");
  if (min_frequency < 1) throw ConfigError("subword rules: min_frequency must be >= 1");
}

namespace {

bool is_lower_alpha(std::string_view w) {
  return std::all_of(w.begin(), w.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

// Byte length of the UTF-8 sequence starting with `lead`.
std::size_t utf8_len(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

std::string escape_field(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_field(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out += s[i];
      continue;
    }
    const char n = s[++i];
    switch (n) {
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: out += n;
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> partition_word(std::string_view word, const SubwordRules& rules) {
  if (word.empty()) throw DataError("partition_word: empty word");
  if (!is_lower_alpha(word)) return {std::string(word)};

  // Vowels, each with at most one following consonant, and the consonant
  // runs between them.
  std::vector<std::string> frags;
  std::size_t i = 0;
  while (i < word.size()) {
    if (rules.is_vowel(word[i])) {
      std::string f(1, word[i++]);
      if (i < word.size() && !rules.is_vowel(word[i])) f += word[i++];
      frags.push_back(std::move(f));
      continue;
    }
    std::string run;
    while (i < word.size() && !rules.is_vowel(word[i])) run += word[i++];
    frags.push_back(std::move(run));
  }

  std::size_t k = 0;
  while (k < frags.size() && frags.size() > 1) {
    if (frags[k].size() != 1) {
      ++k;
      continue;
    }
    if (k + 1 < frags.size()) {
      frags[k + 1] = frags[k] + frags[k + 1];
    } else {
      frags[k - 1] += frags[k];
    }
    frags.erase(frags.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return frags;
}

std::vector<std::string> tokenize_line(std::string_view line, TokenMode mode, const SubwordRules& rules) {
  std::vector<std::string> out;
  switch (mode) {
    case TokenMode::word: {
      std::istringstream in{std::string(line)};
      std::string w;
      while (in >> w) out.push_back(w);
      break;
    }
    case TokenMode::character: {
      for (std::size_t i = 0; i < line.size();) {
        const std::size_t n = std::min(utf8_len(static_cast<unsigned char>(line[i])), line.size() - i);
        if (line[i] == ' ') {
          out.emplace_back(kSpaceToken);
        } else {
          out.emplace_back(line.substr(i, n));
        }
        i += n;
      }
      break;
    }
    case TokenMode::subword: {
      std::size_t start = 0;
      while (true) {
        const std::size_t sp = line.find(' ', start);
        const std::string_view piece = line.substr(start, sp == std::string_view::npos ? line.npos : sp - start);
        if (!piece.empty()) {
          for (auto& s : partition_word(piece, rules)) out.push_back(std::move(s));
        }
        if (sp == std::string_view::npos) break;
        out.emplace_back(kSpaceToken);
        start = sp + 1;
      }
      break;
    }
  }
  return out;
}

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                    std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<std::int32_t> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocab::add(std::string token, std::uint64_t freq) {
  if (index_.contains(token)) throw DataError("duplicate vocabulary entry '" + token + "'");
  index_.emplace(token, static_cast<std::int32_t>(tokens_.size()));
  tokens_.push_back(std::move(token));
  freqs_.push_back(freq);
}

std::vector<std::int32_t> Vocab::encode_line(std::string_view line, const SubwordRules& rules) const {
  std::vector<std::int32_t> ids;
  for (const auto& tok : tokenize_line(line, mode_, rules)) {
    if (auto id = find(tok)) {
      ids.push_back(*id);
      continue;
    }
    if (mode_ == TokenMode::word) {
      ids.push_back(*unk_);
      continue;
    }
    if (mode_ == TokenMode::subword) {
      // Subwords below the threshold are spelled out letter by letter.
      bool ok = true;
      std::vector<std::int32_t> spelled;
      for (char c : tok) {
        auto id = find(std::string(1, c));
        if (!id) {
          ok = false;
          break;
        }
        spelled.push_back(*id);
      }
      if (ok) {
        ids.insert(ids.end(), spelled.begin(), spelled.end());
        continue;
      }
    }
    throw DataError("symbol '" + tok + "' is not in the " + std::string(to_string(mode_)) + " vocabulary");
  }
  return ids;
}

std::string Vocab::decode(const std::vector<std::int32_t>& ids) const {
  std::string out;
  for (auto id : ids) {
    const std::string& t = token(id);
    if (id == eos_) {
      out += '\n';
    } else if (mode_ != TokenMode::word && t == kSpaceToken) {
      out += ' ';
    } else {
      if (mode_ == TokenMode::word && !out.empty() && out.back() != '\n') out += ' ';
      out += t;
    }
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file '" + path + "'");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << escape_field(tokens_[i]) << '\t' << i << '\t' << freqs_[i] << '\n';
  }
  if (!out) throw DataError("error writing vocabulary file '" + path + "'");
}

Vocab Vocab::load(const std::string& path, TokenMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocabulary file '" + path + "'");
  Vocab v;
  v.mode_ = mode;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw DataError(path + ":" + std::to_string(lineno) + ": expected token, id, frequency");
    std::uint64_t id = 0, freq = 0;
    try {
      id = std::stoull(line.substr(t1 + 1, t2 - t1 - 1));
      freq = std::stoull(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed id or frequency");
    }
    if (id != v.size()) throw DataError(path + ":" + std::to_string(lineno) + ": ids must be dense and in order");
    v.add(unescape_field(line.substr(0, t1)), freq);
  }
  auto eos = v.find(kEosToken);
  if (!eos) throw DataError(path + ": vocabulary lacks the end token " + std::string(kEosToken));
  v.eos_ = *eos;
  if (mode == TokenMode::word) {
    auto unk = v.find(kUnkToken);
    if (!unk) throw DataError(path + ": word vocabulary lacks " + std::string(kUnkToken));
    v.unk_ = *unk;
  }
  return v;
}

Vocab Vocab::build(const std::vector<std::string>& lines, TokenMode mode, const SubwordRules& rules,
                   const VocabOptions& opts) {
  rules.validate();
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t n_lines = 0;
  for (const auto& line : lines) {
    for (auto& tok : tokenize_line(line, mode, rules)) ++counts[tok];
    ++n_lines;
  }
  if (counts.empty()) throw DataError("cannot build a vocabulary from an empty corpus");

  Vocab v;
  v.mode_ = mode;
  v.add(std::string(kEosToken), n_lines);
  v.eos_ = 0;
  counts.erase(std::string(kEosToken));
  if (mode == TokenMode::word) {
    const auto it = counts.find(std::string(kUnkToken));
    v.add(std::string(kUnkToken), it == counts.end() ? 0 : it->second);
    v.unk_ = 1;
    if (it != counts.end()) counts.erase(it);
  }

  std::vector<std::pair<std::string, std::uint64_t>> entries;
  const std::uint64_t threshold = mode == TokenMode::word      ? opts.min_frequency
                                  : mode == TokenMode::subword ? rules.min_frequency
                                                               : 1;
  for (auto& [tok, n] : counts) {
    if (n >= threshold) entries.emplace_back(tok, n);
  }
  if (mode == TokenMode::subword) {
    for (char c = 'a'; c <= 'z'; ++c) {
      const std::string letter(1, c);
      if (counts.contains(letter) && counts[letter] >= threshold) continue;
      entries.emplace_back(letter, counts.contains(letter) ? counts[letter] : 0);
    }
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  for (auto& [tok, n] : entries) {
    if (mode == TokenMode::word && opts.max_size > 0 && v.size() >= opts.max_size) break;
    v.add(tok, n);
  }
  return v;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read corpus '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (lines.empty()) throw DataError("corpus '" + path + "' is empty");
  return lines;
}

std::vector<std::vector<std::int32_t>> encode_corpus(const Vocab& vocab, const std::vector<std::string>& lines,
                                                     const SubwordRules& rules) {
  std::vector<std::vector<std::int32_t>> out;
  out.reserve(lines.size());
  for (const auto& line : lines) out.push_back(vocab.encode_line(line, rules));
  return out;
}

namespace {

std::vector<Batch> batch_stream(const std::vector<std::int32_t>& stream, std::int32_t eos, const BatchOptions& o) {
  const std::size_t n = stream.size();
  const std::size_t B = o.lanes;
  const std::size_t T = o.steps;
  const std::size_t lane_len = (n + B - 1) / B;
  if (!o.allow_padding && T > lane_len) {
    throw ConfigError("unroll length " + std::to_string(T) + " exceeds the lane length " + std::to_string(lane_len) +
                      " and padding is disabled");
  }
  const std::size_t slices = (lane_len + T - 1) / T;
  std::vector<Batch> out;
  out.reserve(slices);
  for (std::size_t k = 0; k < slices; ++k) {
    Batch batch(B, T);
    for (std::size_t b = 0; b < B; ++b) {
      batch.carry[b] = k > 0 ? 1 : 0;
      const std::size_t lane_begin = b * lane_len;
      const std::size_t lane_end = std::min(n, lane_begin + lane_len);
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t pos = lane_begin + k * T + t;
        if (pos >= lane_end) break;
        const std::size_t cell = b * T + t;
        batch.ids[cell] = stream[pos];
        batch.targets[cell] = pos + 1 < n ? stream[pos + 1] : eos;
        batch.mask[cell] = 1;
      }
    }
    out.push_back(std::move(batch));
  }
  return out;
}

std::vector<Batch> batch_padded(const std::vector<std::vector<std::int32_t>>& seqs, std::int32_t eos,
                                const BatchOptions& o) {
  const std::size_t B = o.lanes;
  const std::size_t T = o.steps;
  std::size_t longest = 0;
  for (const auto& s : seqs) longest = std::max(longest, s.size());
  if (!o.allow_padding && T > longest) {
    throw ConfigError("unroll length " + std::to_string(T) + " exceeds the longest sequence (" +
                      std::to_string(longest) + ") and padding is disabled");
  }
  std::vector<Batch> out;
  for (std::size_t first = 0; first < seqs.size(); first += B) {
    const std::size_t count = std::min(B, seqs.size() - first);
    std::size_t group_len = 0;
    for (std::size_t j = 0; j < count; ++j) group_len = std::max(group_len, seqs[first + j].size());
    if (group_len == 0) continue;
    const std::size_t slices = (group_len + T - 1) / T;
    for (std::size_t k = 0; k < slices; ++k) {
      Batch batch(B, T);
      for (std::size_t b = 0; b < count; ++b) {
        const auto& s = seqs[first + b];
        batch.carry[b] = k > 0 ? 1 : 0;
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t pos = k * T + t;
          if (pos >= s.size()) break;
          const std::size_t cell = b * T + t;
          batch.ids[cell] = s[pos];
          batch.targets[cell] = pos + 1 < s.size() ? s[pos + 1] : eos;
          batch.mask[cell] = 1;
        }
      }
      out.push_back(std::move(batch));
    }
  }
  return out;
}

}  // namespace

std::vector<Batch> batchify(const std::vector<std::vector<std::int32_t>>& sequences, std::int32_t eos,
                            const BatchOptions& opts) {
  if (opts.lanes < 1 || opts.steps < 1) throw ConfigError("batchify: batch size and unroll length must be >= 1");
  if (opts.layout == BatchLayout::padded) return batch_padded(sequences, eos, opts);
  std::vector<std::int32_t> stream;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (i > 0) stream.push_back(eos);
    stream.insert(stream.end(), sequences[i].begin(), sequences[i].end());
  }
  if (stream.empty()) throw DataError("batchify: no symbols to batch");
  return batch_stream(stream, eos, opts);
}

}  // namespace dsf
