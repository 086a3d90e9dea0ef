#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsf/tensor.hpp"

namespace dsf {

enum class Activation { tanh, logistic, identity, rectifier };

std::string_view to_string(Activation kind);
Activation parse_activation(std::string_view name);

struct RngSeed {
  std::uint64_t value = 0;
};

// Portable sample stream: mt19937_64 words, 53-bit uniforms, Box-Muller normals.
// Identical seed + identical call sequence gives an identical stream on every
// platform, unlike the std:: distributions.
class Rng {
 public:
  explicit Rng(RngSeed seed = {}) : engine_(seed.value) {}

  double uniform();                       // [0, 1)
  std::uint64_t uniform_index(std::uint64_t n);  // [0, n)
  double normal();                        // N(0, 1)
  bool bernoulli(double p);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[uniform_index(i)]);
    }
  }

  std::string serialize() const;
  void deserialize(const std::string& state);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

double activate(Activation kind, double v);
// Derivative expressed through the pre-activation `pre` and output `out`.
double activate_grad(Activation kind, double pre, double out);

// Elementwise activation; rejects non-finite input.
Tensor activation(Activation kind, const Tensor& v);

// Numerically stable softmax (max subtraction); rejects empty input.
Tensor softmax(const Tensor& v);
void softmax_inplace(std::span<double> v);

// dims = {n} for a vector, {rows, cols} for a matrix.
Tensor gaussian_init(const std::vector<std::size_t>& dims, double sigma, Rng& rng);
Tensor gaussian_init(const std::vector<std::size_t>& dims, double sigma, RngSeed seed);

void require_finite(std::span<const double> v, std::string_view what);
bool all_finite(std::span<const double> v);

// ---- dense kernels on row-major storage -----------------------------------
// y = M x
void matvec(const Tensor& m, std::span<const double> x, std::span<double> y);
// y += M x
void matvec_add(const Tensor& m, std::span<const double> x, std::span<double> y);
// y += M^T x
void matvec_t_add(const Tensor& m, std::span<const double> x, std::span<double> y);
// M += a b^T
void outer_add(Tensor& m, std::span<const double> a, std::span<const double> b);
// y = M[:, col]
void copy_column(const Tensor& m, std::size_t col, std::span<double> y);
// M[:, col] += a
void column_add(Tensor& m, std::size_t col, std::span<const double> a);

double dot(std::span<const double> a, std::span<const double> b);
double l1_distance(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

}  // namespace dsf
