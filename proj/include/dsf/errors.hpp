#pragma once

#include <stdexcept>
#include <string>

namespace dsf {

// Dimension or layout disagreement between tensors, states, or configs.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced or consumed where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user configuration (bad flag, out-of-range hyperparameter, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Unreadable/malformed corpus, vocab, or checkpoint.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dsf
