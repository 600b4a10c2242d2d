#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hscd/common.hpp"

namespace hscd {

// Co-registered reflectance cubes from two acquisition dates, band-major
// (C, H, W), optionally with a per-pixel reference map where 0 = unchanged,
// 1 = changed, 2 = unknown.
struct BitemporalScene {
  std::string name;
  int64_t bands = 0;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<float> t1;
  std::vector<float> t2;
  std::vector<uint8_t> labels;

  bool has_labels() const { return !labels.empty(); }
  int64_t pixels() const { return height * width; }

  float at(Phase p, int64_t c, int64_t y, int64_t x) const {
    const auto& cube = p == Phase::T1 ? t1 : t2;
    return cube[static_cast<size_t>((c * height + y) * width + x)];
  }
  uint8_t label_at(int64_t y, int64_t x) const {
    return labels[static_cast<size_t>(y * width + x)];
  }

  void validate() const;
};

// A stack of K*K spectral neighborhoods cut from one phase of a scene,
// stored (N, C, K, K). Labels, when present, are the center-pixel labels
// and are restricted to {0, 1}.
struct PatchBatch {
  int64_t count = 0;
  int64_t bands = 0;
  int64_t k = 0;
  Phase phase = Phase::T1;
  std::vector<float> patches;
  std::vector<std::pair<int64_t, int64_t>> centers;
  std::vector<uint8_t> labels;

  bool has_labels() const { return !labels.empty(); }
  int64_t patch_size() const { return bands * k * k; }
  const float* patch(int64_t n) const {
    return patches.data() + static_cast<size_t>(n * patch_size());
  }
  float* patch(int64_t n) { return patches.data() + static_cast<size_t>(n * patch_size()); }
};

struct ChangeMap {
  std::string scene_name;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> decisions;  // (H, W), values in {0, 1}

  uint8_t at(int64_t y, int64_t x) const {
    return decisions[static_cast<size_t>(y * width + x)];
  }
};

// Scene container: a directory holding a `meta` text manifest plus raw
// little-endian float32 cubes `t1.raw`/`t2.raw` in (C, H, W) order and an
// optional `labels.raw` of uint8 (H, W).
BitemporalScene load_scene(const std::string& path);
void save_scene(const BitemporalScene& scene, const std::string& path);

// Cuts K*K windows centered on the given pixels. Windows crossing the image
// border are mirror-padded without duplicating the edge row/col. Center
// labels are attached when the scene is labeled and no requested center is
// marked unknown.
PatchBatch extract_patches(const BitemporalScene& scene, Phase phase,
                           const std::vector<std::pair<int64_t, int64_t>>& centers, int64_t k);

}  // namespace hscd
