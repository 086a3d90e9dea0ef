#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dsf/lm.hpp"

namespace dsf {

struct DeltaTrace {
  std::vector<std::int32_t> tokens;
  std::vector<double> l1_values;  // |h_t - h_{t-1}|_1 for each token
  std::vector<double> scores;     // min-max normalised l1_values
};

// Min-max normalisation; a degenerate range maps every score to 0.
std::vector<double> minmax_scores(const std::vector<double>& raw);

// Runs the model from the zero state over the null start input and then
// `tokens`; the start transition is not reported.
DeltaTrace delta_trace(const LMModel& model, const std::vector<std::int32_t>& tokens);

// CSV with header token,raw_l1,score; token text comes from `vocab`.
void write_trace_csv(std::ostream& out, const DeltaTrace& trace, const Vocab& vocab);
void write_trace_svg(std::ostream& out, const DeltaTrace& trace, const Vocab& vocab);

struct DecileContrast {
  double top_mean = 0.0;     // mean score over occurrences of the most frequent tenth of types
  double bottom_mean = 0.0;  // same for the least frequent tenth
  std::size_t top_count = 0;
  std::size_t bottom_count = 0;
  std::vector<std::int32_t> top_types, bottom_types;
};

// Types occurring in `traces` are ranked by `frequency` (indexed by token id,
// ties broken by id); each decile holds at least one type.
DecileContrast decile_contrast(const std::vector<DeltaTrace>& traces, const std::vector<std::uint64_t>& frequency);

}  // namespace dsf
