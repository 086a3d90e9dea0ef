#include "dsf/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace dsf {

std::size_t ParamSet::add(std::string name, Tensor value) {
  if (value.empty()) throw ShapeError("parameter '" + name + "' has no extent");
  if (contains(name)) throw ShapeError("duplicate parameter name '" + name + "'");
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
  return tensors_.size() - 1;
}

std::optional<std::size_t> ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

Tensor& ParamSet::at(std::string_view name) {
  auto idx = find(name);
  if (!idx) throw ShapeError("no parameter named '" + std::string(name) + "'");
  return tensors_[*idx];
}

const Tensor& ParamSet::at(std::string_view name) const {
  auto idx = find(name);
  if (!idx) throw ShapeError("no parameter named '" + std::string(name) + "'");
  return tensors_[*idx];
}

std::size_t ParamSet::element_count() const {
  std::size_t total = 0;
  for (const auto& t : tensors_) total += t.size();
  return total;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out = *this;
  out.set_zero();
  return out;
}

void ParamSet::set_zero() {
  for (auto& t : tensors_) t.fill(0.0);
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!tensors_[i].same_shape(other.tensors_[i])) return false;
  }
  return true;
}

void ParamSet::require_same_layout(const ParamSet& other, std::string_view what) const {
  if (same_layout(other)) return;
  for (std::size_t i = 0; i < std::max(size(), other.size()); ++i) {
    if (i >= size()) throw ShapeError(std::string(what) + ": unexpected tensor '" + other.names_[i] + "'");
    if (i >= other.size()) throw ShapeError(std::string(what) + ": missing tensor '" + names_[i] + "'");
    if (names_[i] != other.names_[i] || !tensors_[i].same_shape(other.tensors_[i])) {
      throw ShapeError(std::string(what) + ": tensor " + std::to_string(i) + " is '" + other.names_[i] +
                       "' " + other.tensors_[i].shape_string() + ", expected '" + names_[i] + "' " +
                       tensors_[i].shape_string());
    }
  }
}

bool ParamSet::bitwise_equal(const ParamSet& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!tensors_[i].bitwise_equal(other.tensors_[i])) return false;
  }
  return true;
}

bool ParamSet::all_finite() const {
  for (const auto& t : tensors_) {
    for (double v : t.span()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

std::uint64_t ParamSet::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    mix(names_[i].data(), names_[i].size());
    for (auto d : tensors_[i].dims()) mix(&d, sizeof d);
    mix(tensors_[i].data(), tensors_[i].size() * sizeof(double));
  }
  return h;
}

}  // namespace dsf
