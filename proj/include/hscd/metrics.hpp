#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hscd/scene.hpp"

namespace hscd {

struct Confusion {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t tn = 0;
  int64_t fn = 0;
  int64_t total() const { return tp + fp + tn + fn; }
};

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double oa = 0.0;
  double kc = 0.0;
  double pre = 0.0;
  double f1 = 0.0;
};

struct RgbImage {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> rgb;  // (H, W, 3) interleaved
};

// Counts agreement between a binary decision map and a {0,1,2} reference;
// pixels marked 2 (unknown) are excluded, changed (1) is the positive class.
Confusion confusion(const ChangeMap& pred, const std::vector<uint8_t>& gt);

// Scalar scores from the counts. Division-by-zero conventions: precision 0
// when tp+fp = 0, recall 0 when tp+fn = 0, f1 0 when tp = 0, kc 0 when the
// chance agreement reaches 1.
MetricsReport report(const Confusion& c);

// Per-pixel verdict raster: hit white, correct rejection black, false alarm
// red, miss green, unknown gray.
RgbImage render_map(const ChangeMap& pred, const std::vector<uint8_t>& gt);

void write_png(const RgbImage& img, const std::string& path);

std::string format_report(const MetricsReport& r);
void write_report(const MetricsReport& r, const std::string& path);

}  // namespace hscd
