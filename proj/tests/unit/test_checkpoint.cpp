#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dsf/checkpoint.hpp"
#include "dsf/lm.hpp"
#include "oracle.hpp"

using namespace dsf;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("dsf_ckpt_" + name)).string();
}

Batch fixed_batch(std::size_t V) {
  Rng rng(RngSeed{77});
  return dsf::testing::random_batch(3, 7, V, rng);
}

}  // namespace

TEST_CASE("checkpoint round trip reproduces forward outputs bitwise") {
  const std::vector<AnyCellSpec> specs{CellSpec::delta_full(6, 9), BaselineSpec::of(BaselineKind::lstm_peephole, 6, 9),
                                       BaselineSpec::of(BaselineKind::scrn, 6, 9)};
  for (const auto& spec : specs) {
    Rng rng(RngSeed{5});
    const LMModel m(spec, 9, TokenMode::character, 0.4, rng);
    Checkpoint c;
    c.config_echo = "mode=char\ncell=delta\n";
    c.params = m.params();
    c.rng_state = rng.serialize();
    AdamState a = AdamState::for_params(m.params(), 0.003);
    a.t = 7;
    a.m[0].fill(0.25);
    c.adam = a;
    const std::string path = temp_path("roundtrip.dsf");
    save_checkpoint(path, c);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.config_echo == c.config_echo);
    CHECK(back.params.bitwise_equal(c.params));
    CHECK(back.rng_state == c.rng_state);
    REQUIRE(back.adam.has_value());
    CHECK(back.adam->t == 7);
    CHECK(back.adam->m.bitwise_equal(a.m));
    const LMModel m2(spec, 9, TokenMode::character, back.params);
    const Batch b = fixed_batch(9);
    std::vector<HiddenState> l1, l2;
    const NllResult r1 = sequence_nll(m, b, {}, &l1);
    const NllResult r2 = sequence_nll(m2, b, {}, &l2);
    CHECK(r1.nll == r2.nll);
    for (std::size_t i = 0; i < l1.size(); ++i) CHECK(l1[i].bitwise_equal(l2[i]));
    std::filesystem::remove(path);
  }
}

TEST_CASE("f32 records round to single precision") {
  Rng rng(RngSeed{2});
  ParamSet p;
  p.add("W", gaussian_init({3, 2}, 1.0, rng));
  const std::string path = temp_path("f32.dsf");
  save_checkpoint(path, Checkpoint{"", p, std::nullopt, ""}, Dtype::f32);
  const Checkpoint c = load_checkpoint(path);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(c.params[0].data()[i] == static_cast<double>(static_cast<float>(p[0].data()[i])));
  }
  CHECK(std::filesystem::file_size(path) < 120);
  std::filesystem::remove(path);
}

TEST_CASE("malformed checkpoints are rejected") {
  const std::string path = temp_path("bad.dsf");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE and some bytes";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);

  ParamSet p;
  p.add("x", Tensor::vector({1.0, 2.0}));
  save_checkpoint(path, Checkpoint{"a=b\n", p, std::nullopt, "r"});
  const auto full = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full - 3);
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  {
    save_checkpoint(path, Checkpoint{"a=b\n", p, std::nullopt, "r"});
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << "junk";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("parameters under unknown names are rejected when building a model") {
  Rng rng(RngSeed{3});
  const LMModel m(CellSpec::delta_full(4, 5), 5, TokenMode::character, 0.1, rng);
  ParamSet renamed;
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    renamed.add(i == 0 ? "W_unknown" : m.params().name(i), m.params()[i]);
  }
  CHECK_THROWS_AS(LMModel(CellSpec::delta_full(4, 5), 5, TokenMode::character, renamed), ShapeError);
}
