#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dsf {

// One B x T slice of training or evaluation data, row-major by lane.
struct Batch {
  static constexpr std::int32_t kPad = -1;

  std::size_t lanes = 0;  // B
  std::size_t steps = 0;  // T
  std::vector<std::int32_t> ids;
  std::vector<std::int32_t> targets;
  std::vector<std::uint8_t> mask;   // 1 = target counts toward the loss
  std::vector<std::uint8_t> carry;  // per lane: state carried from the previous slice

  Batch() = default;
  Batch(std::size_t b, std::size_t t)
      : lanes(b), steps(t), ids(b * t, kPad), targets(b * t, kPad), mask(b * t, 0), carry(b, 0) {}

  std::int32_t id(std::size_t b, std::size_t t) const { return ids[b * steps + t]; }
  std::int32_t target(std::size_t b, std::size_t t) const { return targets[b * steps + t]; }
  bool counts(std::size_t b, std::size_t t) const { return mask[b * steps + t] != 0; }

  std::size_t token_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += m;
    return n;
  }
};

}  // namespace dsf
