#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dsf/optim.hpp"
#include "dsf/params.hpp"

namespace dsf {

enum class Dtype : std::uint8_t { f64 = 0, f32 = 1 };

std::string_view to_string(Dtype d);
Dtype parse_dtype(std::string_view s);

// Contents of a "DSF1" file. Tensor records hold the model parameters in
// layout order; f32 records are widened to f64 on load.
struct Checkpoint {
  std::string config_echo;  // key=value lines
  ParamSet params;
  std::optional<AdamState> adam;
  std::string rng_state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Writes to a temporary sibling and renames it into place, so an interrupted
// save leaves the previous file intact.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt, Dtype dtype = Dtype::f64);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dsf
