#pragma once

#include <functional>
#include <string>

#include "dsf/analysis.hpp"
#include "dsf/lm.hpp"

namespace dsf::testing {

// Central differences of `loss` with respect to every parameter entry.
ParamSet central_difference(const ParamSet& params, const std::function<double(const ParamSet&)>& loss,
                            double eps = 1e-4);

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // "tensor[index]: analytic vs numeric"
};

// |a - n| / max(|a| + |n|, floor), maximised over all entries.
GradCheck compare_gradients(const ParamSet& analytic, const ParamSet& numeric, double floor = 1e-5);

// Every cell variant covered by the gradient check.
struct CellCase {
  std::string label;
  AnyCellSpec spec;
};
std::vector<CellCase> gradient_check_cases(std::size_t hidden, std::size_t vocab);

// Random model and batch, gradient of the summed NLL: analytic vs numeric.
GradCheck check_model_gradient(const AnyCellSpec& spec, std::size_t hidden, std::size_t vocab, std::size_t lanes,
                               std::size_t steps, std::uint64_t seed);

// Random parameters for `spec` with non-default gains, biases and mixing weights.
LMModel random_model(const AnyCellSpec& spec, std::size_t hidden, std::size_t vocab, Rng& rng, double scale = 0.3);

Batch random_batch(std::size_t lanes, std::size_t steps, std::size_t vocab, Rng& rng);

}  // namespace dsf::testing
