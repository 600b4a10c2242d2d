#pragma once

#include <cstdint>
#include <string>

#include "hscd/scene.hpp"

namespace hscd {

// Knobs for the synthetic bitemporal generator. The second date differs from
// the first by a smooth per-band illumination gain plus sensor noise
// everywhere (pseudo change) and by material substitution inside contiguous
// blobs covering about change_fraction of the image (true change).
struct SynthConfig {
  int64_t bands = 16;
  int64_t height = 64;
  int64_t width = 64;
  int64_t n_materials = 5;
  double change_fraction = 0.15;
  double gain_lo = 0.8;
  double gain_hi = 1.2;
  double noise_sigma = 0.01;
  uint64_t seed = 0;
  std::string name = "synthetic";

  void validate() const;
};

BitemporalScene generate_scene(const SynthConfig& cfg);

}  // namespace hscd
