#include "hscd/metrics.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <sstream>

namespace hscd {

Confusion confusion(const ChangeMap& pred, const std::vector<uint8_t>& gt) {
  require(gt.size() == pred.decisions.size(),
          "reference map covers " + std::to_string(gt.size()) + " pixels, prediction has " +
              std::to_string(pred.decisions.size()));
  Confusion c;
  for (size_t i = 0; i < gt.size(); ++i) {
    require(pred.decisions[i] <= 1, "decision map must be binary");
    require(gt[i] <= 2, "reference labels must lie in {0,1,2}");
    if (gt[i] == 2) continue;
    const bool truth = gt[i] == 1;
    const bool said = pred.decisions[i] == 1;
    if (truth && said)
      ++c.tp;
    else if (truth && !said)
      ++c.fn;
    else if (!truth && said)
      ++c.fp;
    else
      ++c.tn;
  }
  require(c.total() > 0, "no evaluable pixels: every reference label is unknown");
  return c;
}

MetricsReport report(const Confusion& c) {
  require(c.tp >= 0 && c.fp >= 0 && c.tn >= 0 && c.fn >= 0, "negative confusion count");
  const double n = static_cast<double>(c.total());
  require(c.total() > 0, "confusion matrix is empty");
  const double tp = static_cast<double>(c.tp);
  const double fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn);
  const double fn = static_cast<double>(c.fn);

  MetricsReport r;
  r.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
  r.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
  r.oa = (tp + tn) / n;
  r.pre = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n);
  r.kc = r.pre < 1.0 ? (r.oa - r.pre) / (1.0 - r.pre) : 0.0;
  r.f1 = tp > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

RgbImage render_map(const ChangeMap& pred, const std::vector<uint8_t>& gt) {
  require(gt.size() == pred.decisions.size(), "render_map shape mismatch");
  RgbImage img;
  img.height = pred.height;
  img.width = pred.width;
  img.rgb.resize(gt.size() * 3);
  for (size_t i = 0; i < gt.size(); ++i) {
    uint8_t r, g, b;
    if (gt[i] == 2) {
      r = g = b = 128;
    } else if (gt[i] == 1 && pred.decisions[i] == 1) {
      r = g = b = 255;
    } else if (gt[i] == 0 && pred.decisions[i] == 0) {
      r = g = b = 0;
    } else if (gt[i] == 0) {
      r = 255, g = 0, b = 0;
    } else {
      r = 0, g = 255, b = 0;
    }
    img.rgb[3 * i] = r;
    img.rgb[3 * i + 1] = g;
    img.rgb[3 * i + 2] = b;
  }
  return img;
}

void write_png(const RgbImage& img, const std::string& path) {
  require(img.height > 0 && img.width > 0, "empty image");
  require(img.rgb.size() == static_cast<size_t>(img.height * img.width * 3),
          "image buffer size mismatch");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, img.rgb.data(), 0, nullptr))
    throw IoError("png write failed for " + path + ": " + png.message);
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "precision " << r.precision << "\n"
      << "recall " << r.recall << "\n"
      << "oa " << r.oa << "\n"
      << "kc " << r.kc << "\n"
      << "pre " << r.pre << "\n"
      << "f1 " << r.f1 << "\n";
  return out.str();
}

void write_report(const MetricsReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path);
  out << format_report(r);
  if (!out) throw IoError("write failed on " + path);
}

}  // namespace hscd
