#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "dsf/data.hpp"
#include "dsf/numerics.hpp"

using namespace dsf;

namespace {

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += p;
  return s;
}

std::string random_word(Rng& rng, std::size_t len) {
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w += static_cast<char>('a' + rng.uniform_index(26));
  return w;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dsf_test_" + name);
}

}  // namespace

TEST_CASE("partition_word golden traces") {
  const SubwordRules r;
  CHECK(partition_word("the", r) == std::vector<std::string>{"the"});
  CHECK(partition_word("government", r) == std::vector<std::string>{"gov", "er", "nm", "ent"});
  CHECK(partition_word("a", r) == std::vector<std::string>{"a"});
  CHECK(partition_word("strength", r) == std::vector<std::string>{"str", "en", "gth"});
  CHECK(partition_word("idea", r) == std::vector<std::string>{"id", "ea"});
  CHECK(partition_word("N.", r) == std::vector<std::string>{"N."});
  CHECK_THROWS_AS(partition_word("", r), DataError);
  SubwordRules y;
  y.vowels = "aeiouy";
  CHECK(join(partition_word("rhythm", y)) == "rhythm");
}

TEST_CASE("partition round-trip and minimum length on random words") {
  Rng rng(RngSeed{17});
  const SubwordRules r;
  for (int i = 0; i < 5000; ++i) {
    const std::string w = random_word(rng, 1 + rng.uniform_index(14));
    const auto parts = partition_word(w, r);
    CHECK(join(parts) == w);
    if (w.size() >= 2) {
      for (const auto& p : parts) CHECK(p.size() >= 2);
    }
  }
}

TEST_CASE("tokenize_line") {
  CHECK(tokenize_line("the  cat sat", TokenMode::word) == std::vector<std::string>{"the", "cat", "sat"});
  CHECK(tokenize_line("a b", TokenMode::character) == std::vector<std::string>{"a", "<sp>", "b"});
  CHECK(tokenize_line("né", TokenMode::character) == std::vector<std::string>{"n", "é"});
  CHECK(tokenize_line("the government", TokenMode::subword) ==
        std::vector<std::string>{"the", "<sp>", "gov", "er", "nm", "ent"});
}

TEST_CASE("char vocabulary enumeration") {
  const Vocab v = Vocab::build({"ab ab ab"}, TokenMode::character);
  CHECK(v.size() == 4);
  CHECK(v.token(v.eos()) == "</s>");
  CHECK(v.eos() == 0);
  std::set<std::string> toks;
  for (std::size_t i = 0; i < v.size(); ++i) toks.insert(v.token(static_cast<std::int32_t>(i)));
  CHECK(toks == std::set<std::string>{"a", "b", "<sp>", "</s>"});
  CHECK_THROWS_AS(Vocab::build({}, TokenMode::character), DataError);
  CHECK_THROWS_AS(Vocab::build({"", ""}, TokenMode::word), DataError);
}

TEST_CASE("vocabulary ordering is deterministic") {
  const std::vector<std::string> lines{"b a c a", "c a"};
  const Vocab v = Vocab::build(lines, TokenMode::word);
  CHECK(v.token(0) == "</s>");
  CHECK(v.token(1) == "<unk>");
  CHECK(v.token(2) == "a");
  CHECK(v.token(3) == "c");
  CHECK(v.token(4) == "b");
  CHECK(v.encode_line("a zebra") == std::vector<std::int32_t>{2, 1});
  VocabOptions o;
  o.min_frequency = 2;
  CHECK(Vocab::build(lines, TokenMode::word, {}, o).size() == 4);
  o.min_frequency = 1;
  o.max_size = 3;
  CHECK(Vocab::build(lines, TokenMode::word, {}, o).size() == 3);
}

TEST_CASE("subword vocabulary holds the letters and end token on top of the kept subwords") {
  const std::vector<std::string> lines{"the government the people", "the end"};
  for (std::uint64_t threshold : {1u, 2u, 3u, 100u}) {
    SubwordRules r;
    r.min_frequency = threshold;
    const Vocab v = Vocab::build(lines, TokenMode::subword, r);
    std::map<std::string, std::uint64_t> counts;
    for (const auto& l : lines) {
      for (const auto& t : tokenize_line(l, TokenMode::subword, r)) ++counts[t];
    }
    std::set<std::string> expect{"</s>"};
    for (char c = 'a'; c <= 'z'; ++c) expect.insert(std::string(1, c));
    for (const auto& [t, n] : counts) {
      if (n >= threshold) expect.insert(t);
    }
    std::set<std::string> got;
    for (std::size_t i = 0; i < v.size(); ++i) got.insert(v.token(static_cast<std::int32_t>(i)));
    CHECK(got == expect);
    CHECK(v.size() == expect.size());
  }
}

TEST_CASE("encode/decode round trip in char and subword modes") {
  const std::vector<std::string> lines{"the quick brown fox", "jumps over  the lazy dog", "", "government of the people"};
  const Vocab c = Vocab::build(lines, TokenMode::character);
  SubwordRules r;
  r.min_frequency = 2;
  const Vocab s = Vocab::build(lines, TokenMode::subword, r);
  for (const Vocab* v : {&c, &s}) {
    std::vector<std::int32_t> all;
    std::string expect;
    for (const auto& l : lines) {
      const auto ids = v->encode_line(l, r);
      all.insert(all.end(), ids.begin(), ids.end());
      all.push_back(v->eos());
      expect += l + "\n";
    }
    CHECK(v->decode(all) == expect);
  }
  CHECK_THROWS_AS(c.encode_line("xyz!"), DataError);
}

TEST_CASE("vocabulary file round trip") {
  const Vocab v = Vocab::build({"tab\there back\\slash", "x"}, TokenMode::word);
  const auto path = temp_file("vocab.tsv");
  v.save(path.string());
  const Vocab w = Vocab::load(path.string(), TokenMode::word);
  REQUIRE(w.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto id = static_cast<std::int32_t>(i);
    CHECK(w.token(id) == v.token(id));
    CHECK(w.frequency(id) == v.frequency(id));
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(Vocab::load("/nonexistent/vocab.tsv", TokenMode::word), DataError);
}

TEST_CASE("batchify slicing") {
  const auto batches = batchify({{1, 2, 3, 4}}, 0, BatchOptions{1, 2, BatchLayout::continuous, true});
  REQUIRE(batches.size() == 2);
  CHECK(batches[0].ids == std::vector<std::int32_t>{1, 2});
  CHECK(batches[0].targets == std::vector<std::int32_t>{2, 3});
  CHECK(batches[0].carry[0] == 0);
  CHECK(batches[1].ids == std::vector<std::int32_t>{3, 4});
  CHECK(batches[1].targets == std::vector<std::int32_t>{4, 0});
  CHECK(batches[1].carry[0] == 1);
}

TEST_CASE("batchify padding and conservation") {
  Rng rng(RngSeed{3});
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<std::int32_t>> seqs(1 + rng.uniform_index(12));
    std::size_t n = 0;
    for (auto& s : seqs) {
      s.resize(rng.uniform_index(9));
      for (auto& id : s) id = 1 + static_cast<std::int32_t>(rng.uniform_index(5));
      n += s.size();
    }
    const std::size_t B = 1 + rng.uniform_index(4), T = 1 + rng.uniform_index(5);
    std::size_t padded = 0;
    for (const auto& b : batchify(seqs, 0, BatchOptions{B, T, BatchLayout::padded, true})) {
      padded += b.token_count();
      for (std::size_t i = 0; i < b.mask.size(); ++i) {
        if (!b.mask[i]) {
          CHECK(b.ids[i] == Batch::kPad);
          CHECK(b.targets[i] == Batch::kPad);
        }
      }
    }
    CHECK(padded == n);
    if (n == 0) continue;
    std::size_t cont = 0;
    for (const auto& b : batchify(seqs, 0, BatchOptions{B, T, BatchLayout::continuous, true})) cont += b.token_count();
    CHECK(cont == n + seqs.size() - 1);
  }
}

TEST_CASE("batchify rejects unroll beyond the data without padding") {
  CHECK_THROWS_AS(batchify({{1, 2}}, 0, BatchOptions{1, 5, BatchLayout::padded, false}), ConfigError);
  CHECK_THROWS_AS(batchify({{1, 2}}, 0, BatchOptions{1, 5, BatchLayout::continuous, false}), ConfigError);
  CHECK_THROWS_AS(batchify({{1, 2}}, 0, BatchOptions{0, 5, BatchLayout::continuous, true}), ConfigError);
  CHECK_THROWS_AS(batchify({{}}, 0, BatchOptions{1, 1, BatchLayout::continuous, true}), DataError);
}

TEST_CASE("read_lines") {
  const auto path = temp_file("corpus.txt");
  {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    std::fputs("one\r\ntwo\n", f);
    std::fclose(f);
  }
  CHECK(read_lines(path.string()) == std::vector<std::string>{"one", "two"});
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_lines(path.string()), DataError);
}
