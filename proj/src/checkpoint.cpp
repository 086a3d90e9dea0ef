#include "dsf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsf/errors.hpp"

namespace dsf {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::string_view to_string(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

Dtype parse_dtype(std::string_view s) {
  if (s == "f64") return Dtype::f64;
  if (s == "f32") return Dtype::f32;
  throw ConfigError("unknown dtype '" + std::string(s) + "' (valid: f64, f32)");
}

namespace {

constexpr char kMagic[4] = {'D', 'S', 'F', '1'};
constexpr std::uint64_t kMaxString = 1ull << 28;
constexpr std::uint64_t kMaxElements = 1ull << 32;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const std::string& name, const Tensor& t, Dtype dtype) {
    str(name);
    pod<std::uint8_t>(static_cast<std::uint8_t>(dtype));
    pod<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    if (t.rank() >= 1) pod<std::uint64_t>(t.rank() == 1 ? t.size() : t.rows());
    if (t.rank() == 2) pod<std::uint64_t>(t.cols());
    if (dtype == Dtype::f64) {
      out_.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    } else {
      for (double v : t.span()) pod<float>(static_cast<float>(v));
    }
  }
  void params(const ParamSet& p, Dtype dtype) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) tensor(p.name(i), p[i], dtype);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) fail("truncated file");
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > kMaxString) fail("string length " + std::to_string(n) + " is implausible");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) fail("truncated file");
    return s;
  }
  std::pair<std::string, Tensor> tensor() {
    std::string name = str();
    const auto dtype = pod<std::uint8_t>();
    const auto rank = pod<std::uint8_t>();
    if (dtype > 1) fail("tensor '" + name + "' has unknown dtype tag " + std::to_string(dtype));
    if (rank > 2) fail("tensor '" + name + "' has unsupported rank " + std::to_string(rank));
    std::uint64_t d0 = rank >= 1 ? pod<std::uint64_t>() : 1;
    std::uint64_t d1 = rank == 2 ? pod<std::uint64_t>() : 1;
    if (d0 > kMaxElements || d1 > kMaxElements || d0 * d1 > kMaxElements) fail("tensor '" + name + "' is too large");
    Tensor t = rank == 0 ? Tensor() : rank == 1 ? Tensor(static_cast<std::size_t>(d0))
                                                : Tensor(static_cast<std::size_t>(d0), static_cast<std::size_t>(d1));
    if (static_cast<Dtype>(dtype) == Dtype::f64) {
      in_.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
      if (!in_) fail("truncated file");
    } else {
      for (double& v : t.span()) v = pod<float>();
    }
    return {std::move(name), std::move(t)};
  }
  ParamSet params() {
    const auto n = pod<std::uint32_t>();
    ParamSet p;
    for (std::uint32_t i = 0; i < n; ++i) {
      auto [name, t] = tensor();
      if (p.contains(name)) fail("duplicate tensor '" + name + "'");
      p.add(std::move(name), std::move(t));
    }
    return p;
  }

  [[noreturn]] void fail(const std::string& what) const { throw DataError(path_ + ": " + what); }

 private:
  std::istream& in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt, Dtype dtype) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint '" + tmp + "'");
    Writer w(out);
    out.write(kMagic, sizeof kMagic);
    w.pod<std::uint32_t>(kCheckpointVersion);
    w.str(ckpt.config_echo);
    w.params(ckpt.params, dtype);
    w.pod<std::uint8_t>(ckpt.adam ? 1 : 0);
    if (ckpt.adam) {
      const AdamState& a = *ckpt.adam;
      w.pod<std::uint64_t>(a.t);
      w.pod<double>(a.beta1);
      w.pod<double>(a.beta2);
      w.pod<double>(a.eps);
      w.pod<double>(a.lr);
      w.params(a.m, Dtype::f64);
      w.params(a.v, Dtype::f64);
    }
    w.str(ckpt.rng_state);
    out.flush();
    if (!out) throw DataError("error writing checkpoint '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move checkpoint into place at '" + path + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint '" + path + "'");
  Reader r(in, path);
  char magic[4] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) r.fail("not a DSF1 checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config_echo = r.str();
  c.params = r.params();
  if (r.pod<std::uint8_t>() != 0) {
    AdamState a;
    a.t = r.pod<std::uint64_t>();
    a.beta1 = r.pod<double>();
    a.beta2 = r.pod<double>();
    a.eps = r.pod<double>();
    a.lr = r.pod<double>();
    a.m = r.params();
    a.v = r.params();
    if (!a.m.same_layout(c.params) || !a.v.same_layout(c.params)) r.fail("optimizer moments do not match parameters");
    c.adam = std::move(a);
  }
  c.rng_state = r.str();
  if (in.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes after the last section");
  return c;
}

}  // namespace dsf
