#include "dsf/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace dsf {

std::string_view to_string(Activation kind) {
  switch (kind) {
    case Activation::tanh: return "tanh";
    case Activation::logistic: return "logistic";
    case Activation::identity: return "identity";
    case Activation::rectifier: return "rectifier";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "logistic" || name == "sigmoid") return Activation::logistic;
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "rectifier" || name == "relu") return Activation::rectifier;
  throw ConfigError("unknown activation '" + std::string(name) +
                    "' (valid: tanh, logistic, identity, rectifier)");
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t w;
  do {
    w = engine_();
  } while (w >= limit);
  return w % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
  out.precision(17);
  out << std::hexfloat << spare_;
  return out.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream in(state);
  int spare_flag = 0;
  std::string spare_text;
  in >> engine_ >> spare_flag >> spare_text;
  if (!in) throw DataError("malformed RNG state");
  has_spare_ = spare_flag != 0;
  spare_ = std::strtod(spare_text.c_str(), nullptr);
}

double activate(Activation kind, double v) {
  switch (kind) {
    case Activation::tanh: return std::tanh(v);
    case Activation::logistic: return 1.0 / (1.0 + std::exp(-v));
    case Activation::identity: return v;
    case Activation::rectifier: return v > 0.0 ? v : 0.0;
  }
  return v;
}

double activate_grad(Activation kind, double pre, double out) {
  switch (kind) {
    case Activation::tanh: return 1.0 - out * out;
    case Activation::logistic: return out * (1.0 - out);
    case Activation::identity: return 1.0;
    case Activation::rectifier: return pre > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(std::span<const double> v, std::string_view what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError("non-finite value in " + std::string(what) + " at index " + std::to_string(i));
    }
  }
}

Tensor activation(Activation kind, const Tensor& v) {
  require_finite(v.span(), "activation input");
  if (kind == Activation::identity) return v;
  Tensor out = v;
  for (double& x : out.span()) x = activate(kind, x);
  return out;
}

void softmax_inplace(std::span<double> v) {
  if (v.empty()) throw ShapeError("softmax of empty vector");
  const double peak = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - peak);
    total += x;
  }
  const double inv = 1.0 / total;
  for (double& x : v) x *= inv;
}

Tensor softmax(const Tensor& v) {
  if (v.empty()) throw ShapeError("softmax of empty vector");
  if (v.rank() != 1) throw ShapeError("softmax expects a vector, got " + v.shape_string());
  require_finite(v.span(), "softmax input");
  Tensor out = v;
  softmax_inplace(out.span());
  return out;
}

Tensor gaussian_init(const std::vector<std::size_t>& dims, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian_init: sigma must be positive");
  if (dims.empty() || dims.size() > 2) throw ShapeError("gaussian_init: rank must be 1 or 2");
  Tensor t = dims.size() == 1 ? Tensor(dims[0]) : Tensor(dims[0], dims[1]);
  for (double& x : t.span()) x = sigma * rng.normal();
  return t;
}

Tensor gaussian_init(const std::vector<std::size_t>& dims, double sigma, RngSeed seed) {
  Rng rng(seed);
  return gaussian_init(dims, sigma, rng);
}

void matvec(const Tensor& m, std::span<const double> x, std::span<double> y) {
  std::fill(y.begin(), y.end(), 0.0);
  matvec_add(m, x, y);
}

void matvec_add(const Tensor& m, std::span<const double> x, std::span<double> y) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.rank() == 1 ? 1 : m.cols();
  if (x.size() != cols || y.size() != rows) {
    throw ShapeError("matvec: matrix " + m.shape_string() + " vs x[" + std::to_string(x.size()) +
                     "], y[" + std::to_string(y.size()) + "]");
  }
  const double* a = m.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = a + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

void matvec_t_add(const Tensor& m, std::span<const double> x, std::span<double> y) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.rank() == 1 ? 1 : m.cols();
  if (x.size() != rows || y.size() != cols) {
    throw ShapeError("matvec_t: matrix " + m.shape_string() + " vs x[" + std::to_string(x.size()) +
                     "], y[" + std::to_string(y.size()) + "]");
  }
  const double* a = m.data();
  double* out = y.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* row = a + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += row[c] * xr;
  }
}

void outer_add(Tensor& m, std::span<const double> a, std::span<const double> b) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.rank() == 1 ? 1 : m.cols();
  if (a.size() != rows || b.size() != cols) throw ShapeError("outer_add: shape mismatch for " + m.shape_string());
  double* p = m.data();
  const double* bp = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    double* row = p + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += ar * bp[c];
  }
}

void copy_column(const Tensor& m, std::size_t col, std::span<double> y) {
  const std::size_t cols = m.rank() == 1 ? 1 : m.cols();
  if (col >= cols || y.size() != m.rows()) throw ShapeError("copy_column: out of range");
  for (std::size_t r = 0; r < m.rows(); ++r) y[r] = m.data()[r * cols + col];
}

void column_add(Tensor& m, std::size_t col, std::span<const double> a) {
  const std::size_t cols = m.rank() == 1 ? 1 : m.cols();
  if (col >= cols || a.size() != m.rows()) throw ShapeError("column_add: out of range");
  for (std::size_t r = 0; r < m.rows(); ++r) m.data()[r * cols + col] += a[r];
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("l1_distance: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc;
}

double squared_norm(std::span<const double> a) {
  double acc = 0.0;
  for (double x : a) acc += x * x;
  return acc;
}

}  // namespace dsf
