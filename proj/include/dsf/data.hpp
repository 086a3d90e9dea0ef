#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dsf/batch.hpp"
#include "dsf/errors.hpp"

namespace dsf {

enum class TokenMode { word, character, subword };

std::string_view to_string(TokenMode m);
TokenMode parse_token_mode(std::string_view s);

struct SubwordRules {
  std::string vowels = "aeiou";  // add 'y' to treat it as a vowel
  std::uint64_t min_frequency = 1;

  void validate() const;
  bool is_vowel(char c) const { return vowels.find(c) != std::string::npos; }
};

// Splits a lowercase alphabetic word into subwords; other tokens pass through
// whole. The pieces concatenate back to `word`, and none is shorter than two
// characters unless the word itself is.
std::vector<std::string> partition_word(std::string_view word, const SubwordRules& rules);

inline constexpr std::string_view kEosToken = "</s>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kSpaceToken = "<sp>";

// Splits one corpus line into symbols for the given mode (no end token).
// Character and subword modes represent each space by kSpaceToken so lines
// decode exactly.
std::vector<std::string> tokenize_line(std::string_view line, TokenMode mode, const SubwordRules& rules = {});

struct VocabOptions {
  std::uint64_t min_frequency = 1;  // word mode; subword mode uses SubwordRules
  std::size_t max_size = 0;         // word mode cap including specials; 0 = none
};

class Vocab {
 public:
  TokenMode mode() const { return mode_; }
  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::int32_t id) const;
  std::uint64_t frequency(std::int32_t id) const { return freqs_.at(static_cast<std::size_t>(id)); }
  std::optional<std::int32_t> find(std::string_view token) const;
  std::int32_t eos() const { return eos_; }
  std::optional<std::int32_t> unk() const { return unk_; }

  // Symbol ids of one line (no end token). Word mode maps unknown words to
  // UNK; other modes reject unrepresentable symbols with DataError.
  std::vector<std::int32_t> encode_line(std::string_view line, const SubwordRules& rules = {}) const;
  // Inverse of encode_line for character/subword modes; EOS becomes '\n'.
  std::string decode(const std::vector<std::int32_t>& ids) const;

  // TSV: token TAB id TAB frequency; backslash, tab, and newline are escaped.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path, TokenMode mode);

  // Ids: EOS first (then UNK in word mode), then frequency descending,
  // ties lexicographic.
  static Vocab build(const std::vector<std::string>& lines, TokenMode mode, const SubwordRules& rules = {},
                     const VocabOptions& opts = {});

 private:
  void add(std::string token, std::uint64_t freq);

  TokenMode mode_ = TokenMode::word;
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> freqs_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::int32_t eos_ = 0;
  std::optional<std::int32_t> unk_;
};

std::vector<std::string> read_lines(const std::string& path);

// One id sequence per corpus line.
std::vector<std::vector<std::int32_t>> encode_corpus(const Vocab& vocab, const std::vector<std::string>& lines,
                                                     const SubwordRules& rules = {});

enum class BatchLayout {
  continuous,  // lines joined by EOS into one stream, split across B lanes
  padded,      // B sentences per group, each starting from the null state
};

struct BatchOptions {
  std::size_t lanes = 20;
  std::size_t steps = 50;
  BatchLayout layout = BatchLayout::continuous;
  bool allow_padding = true;
};

// Targets are the inputs shifted by one with EOS after the last symbol.
std::vector<Batch> batchify(const std::vector<std::vector<std::int32_t>>& sequences, std::int32_t eos,
                            const BatchOptions& opts);

}  // namespace dsf
