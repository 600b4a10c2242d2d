#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hscd/array.hpp"
#include "hscd/rng.hpp"
#include "hscd/scene.hpp"

namespace hscd {

// Unsupervised change guesses with a per-pixel margin: how much closer the
// pixel's projected neighborhood sits to its own cluster centroid than to the
// other one.
struct PseudoLabelMap {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> labels;     // (H, W), {0, 1}
  std::vector<double> confidence;  // (H, W), >= 0
};

struct TrainingPixels {
  std::vector<std::pair<int64_t, int64_t>> coords;
  std::vector<uint8_t> labels;  // pseudo label of each coordinate
};

// Elementwise |t1 - t2|, shape (C, H, W).
Array difference_image(const BitemporalScene& scene);

// Classical detector: band-magnitude map -> h*h overlapping neighborhoods ->
// principal-component projection to n_components dims -> 2-means. The cluster
// with the larger mean difference magnitude is labeled changed. Deterministic
// (internally seeded clustering).
PseudoLabelMap pca_kmeans_pseudolabel(const Array& diff, int64_t block, int64_t n_components);

// Highest-confidence pixels per class, ties broken by a seeded shuffle. When
// a class has fewer pixels than requested, all of them are returned and a
// warning is printed.
TrainingPixels select_training_pixels(const PseudoLabelMap& pseudo, int64_t n_changed,
                                      int64_t n_unchanged, Rng& rng);

void save_pseudo_map(const PseudoLabelMap& map, const std::string& path);
PseudoLabelMap load_pseudo_map(const std::string& path);

// Lloyd 2-means with seeded farthest-aware initialization and restarts;
// returns per-point assignment and the (2, d) centroid matrix.
std::pair<std::vector<int>, Array> cluster_two_means(const Array& points);

}  // namespace hscd
