#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsf/tensor.hpp"

namespace dsf {

// Ordered collection of named trainable tensors. Order is fixed at
// construction so index lookups made by cells stay valid; gradient and
// optimizer-moment sets share the same layout via zeros_like().
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }

  std::optional<std::size_t> find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name).has_value(); }
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  // Total scalar count ("live census").
  std::size_t element_count() const;

  ParamSet zeros_like() const;
  void set_zero();
  bool same_layout(const ParamSet& other) const;
  void require_same_layout(const ParamSet& other, std::string_view what) const;

  bool bitwise_equal(const ParamSet& other) const;
  bool all_finite() const;
  // FNV-1a over names, shapes, and payload bytes.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

}  // namespace dsf
