#include "hscd/pseudo_label.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

namespace hscd {

Array difference_image(const BitemporalScene& scene) {
  scene.validate();
  Array out({scene.bands, scene.height, scene.width});
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = std::abs(static_cast<double>(scene.t1[static_cast<size_t>(i)]) -
                      static_cast<double>(scene.t2[static_cast<size_t>(i)]));
  return out;
}

namespace {

int64_t reflect(int64_t i, int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

double sq_dist(const double* a, const double* b, int64_t d) {
  double s = 0.0;
  for (int64_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

struct KmeansResult {
  std::vector<int> assign;
  Array centroids;
  double wcss = 0.0;
};

KmeansResult lloyd_once(const Array& pts, Rng& rng) {
  const int64_t n = pts.rows(), d = pts.cols();
  KmeansResult res;
  res.assign.assign(static_cast<size_t>(n), 0);
  res.centroids = Array::zeros({2, d});

  // k-means++ seeding: uniform first pick, second weighted by squared
  // distance to the first.
  const int64_t first = rng.uniform_int(0, n - 1);
  std::copy(pts.data() + first * d, pts.data() + (first + 1) * d, res.centroids.data());
  std::vector<double> w(static_cast<size_t>(n));
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    w[static_cast<size_t>(i)] = sq_dist(pts.data() + i * d, res.centroids.data(), d);
    total += w[static_cast<size_t>(i)];
  }
  int64_t second = first;
  if (total > 0.0) {
    double pick = rng.uniform() * total;
    for (int64_t i = 0; i < n; ++i) {
      pick -= w[static_cast<size_t>(i)];
      if (pick <= 0.0) {
        second = i;
        break;
      }
    }
  }
  std::copy(pts.data() + second * d, pts.data() + (second + 1) * d, res.centroids.data() + d);

  std::vector<double> sums(static_cast<size_t>(2 * d));
  for (int iter = 0; iter < 100; ++iter) {
    bool moved = false;
    for (int64_t i = 0; i < n; ++i) {
      const double d0 = sq_dist(pts.data() + i * d, res.centroids.data(), d);
      const double d1 = sq_dist(pts.data() + i * d, res.centroids.data() + d, d);
      const int a = d1 < d0 ? 1 : 0;
      if (a != res.assign[static_cast<size_t>(i)]) {
        res.assign[static_cast<size_t>(i)] = a;
        moved = true;
      }
    }
    if (iter > 0 && !moved) break;

    std::fill(sums.begin(), sums.end(), 0.0);
    int64_t count[2] = {0, 0};
    for (int64_t i = 0; i < n; ++i) {
      const int a = res.assign[static_cast<size_t>(i)];
      ++count[a];
      for (int64_t j = 0; j < d; ++j) sums[static_cast<size_t>(a * d + j)] += pts.at(i, j);
    }
    for (int c = 0; c < 2; ++c) {
      if (count[c] == 0) {
        // Re-seed an emptied cluster at the point farthest from the other
        // centroid so both clusters stay populated.
        const double* other = res.centroids.data() + (1 - c) * d;
        int64_t far_i = 0;
        double far_d = -1.0;
        for (int64_t i = 0; i < n; ++i) {
          const double dist = sq_dist(pts.data() + i * d, other, d);
          if (dist > far_d) {
            far_d = dist;
            far_i = i;
          }
        }
        std::copy(pts.data() + far_i * d, pts.data() + (far_i + 1) * d,
                  res.centroids.data() + c * d);
        moved = true;
      } else {
        for (int64_t j = 0; j < d; ++j)
          res.centroids.at(c, j) = sums[static_cast<size_t>(c * d + j)] / double(count[c]);
      }
    }
    if (!moved && iter > 0) break;
  }

  res.wcss = 0.0;
  for (int64_t i = 0; i < n; ++i)
    res.wcss += sq_dist(pts.data() + i * d,
                        res.centroids.data() + res.assign[static_cast<size_t>(i)] * d, d);
  return res;
}

}  // namespace

std::pair<std::vector<int>, Array> cluster_two_means(const Array& points) {
  const int64_t n = points.rows(), d = points.cols();
  require(n >= 2, "2-means needs at least two points");

  bool any_distinct = false;
  for (int64_t i = 1; i < n && !any_distinct; ++i)
    any_distinct = sq_dist(points.data(), points.data() + i * d, d) > 0.0;
  if (!any_distinct)
    throw InvariantError("all points identical: clustering would produce a single cluster");

  KmeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (uint64_t restart = 0; restart < 10; ++restart) {
    Rng rng = substream_rng(0, "pseudo.kmeans", {restart});
    KmeansResult r = lloyd_once(points, rng);
    if (r.wcss < best.wcss) best = std::move(r);
  }
  return {std::move(best.assign), std::move(best.centroids)};
}

PseudoLabelMap pca_kmeans_pseudolabel(const Array& diff, int64_t block, int64_t n_components) {
  require(diff.shape().size() == 3, "difference image must be (C,H,W)");
  require(block > 0 && block % 2 == 1, "neighborhood size must be odd");
  require(n_components >= 1 && n_components <= block * block,
          "component count must lie in [1, block^2]");
  const int64_t C = diff.dim(0), H = diff.dim(1), W = diff.dim(2);
  require(block <= 2 * std::min(H, W) - 1, "neighborhood too large for reflect padding");
  const int64_t px = H * W;
  const int64_t d = block * block;

  // Band magnitude per pixel.
  std::vector<double> mag(static_cast<size_t>(px), 0.0);
  for (int64_t c = 0; c < C; ++c)
    for (int64_t p = 0; p < px; ++p) {
      const double v = diff[c * px + p];
      mag[static_cast<size_t>(p)] += v * v;
    }
  for (auto& v : mag) v = std::sqrt(v);

  // Overlapping neighborhoods, mirror-padded, mean-centered.
  Array vecs({px, d});
  const int64_t half = block / 2;
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      double* row = vecs.data() + (y * W + x) * d;
      int64_t k = 0;
      for (int64_t dy = -half; dy <= half; ++dy)
        for (int64_t dx = -half; dx <= half; ++dx)
          row[k++] = mag[static_cast<size_t>(reflect(y + dy, H) * W + reflect(x + dx, W))];
    }
  std::vector<double> mean(static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < px; ++i)
    for (int64_t j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += vecs.at(i, j);
  for (auto& v : mean) v /= double(px);
  for (int64_t i = 0; i < px; ++i)
    for (int64_t j = 0; j < d; ++j) vecs.at(i, j) -= mean[static_cast<size_t>(j)];

  // Principal axes of the neighborhood cloud.
  using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const EMat> X(vecs.data(), px, d);
  EMat cov = (X.transpose() * X) / double(px);
  Eigen::SelfAdjointEigenSolver<EMat> eig(cov);
  require(eig.info() == Eigen::Success, "eigendecomposition failed");
  // Eigenvalues ascend; take the trailing n_components columns.
  EMat basis = eig.eigenvectors().rightCols(n_components).rowwise().reverse();

  Array proj({px, n_components});
  Eigen::Map<EMat>(proj.data(), px, n_components) = X * basis;

  auto [assign, centroids] = cluster_two_means(proj);

  // Changed = cluster whose members have the larger mean magnitude.
  double mean_mag[2] = {0.0, 0.0};
  int64_t count[2] = {0, 0};
  for (int64_t p = 0; p < px; ++p) {
    mean_mag[assign[static_cast<size_t>(p)]] += mag[static_cast<size_t>(p)];
    ++count[assign[static_cast<size_t>(p)]];
  }
  for (int c = 0; c < 2; ++c) mean_mag[c] = count[c] > 0 ? mean_mag[c] / double(count[c]) : 0.0;
  const int changed_cluster = mean_mag[1] > mean_mag[0] ? 1 : 0;

  PseudoLabelMap out;
  out.height = H;
  out.width = W;
  out.labels.resize(static_cast<size_t>(px));
  out.confidence.resize(static_cast<size_t>(px));
  for (int64_t p = 0; p < px; ++p) {
    const int a = assign[static_cast<size_t>(p)];
    out.labels[static_cast<size_t>(p)] = a == changed_cluster ? 1 : 0;
    const double own = std::sqrt(sq_dist(proj.data() + p * n_components,
                                         centroids.data() + a * n_components, n_components));
    const double other = std::sqrt(sq_dist(proj.data() + p * n_components,
                                           centroids.data() + (1 - a) * n_components,
                                           n_components));
    out.confidence[static_cast<size_t>(p)] = std::abs(other - own);
  }
  return out;
}

TrainingPixels select_training_pixels(const PseudoLabelMap& pseudo, int64_t n_changed,
                                      int64_t n_unchanged, Rng& rng) {
  require(n_changed >= 0 && n_unchanged >= 0, "requested counts must be non-negative");
  require(pseudo.labels.size() == pseudo.confidence.size() &&
              pseudo.labels.size() == static_cast<size_t>(pseudo.height * pseudo.width),
          "pseudo map shapes disagree");

  std::vector<int64_t> changed, unchanged;
  for (int64_t p = 0; p < pseudo.height * pseudo.width; ++p)
    (pseudo.labels[static_cast<size_t>(p)] == 1 ? changed : unchanged).push_back(p);
  if (changed.empty()) throw InvariantError("pseudo map contains no changed pixels");
  if (unchanged.empty()) throw InvariantError("pseudo map contains no unchanged pixels");

  auto take = [&](std::vector<int64_t>& pool, int64_t want, const char* cls) {
    rng.shuffle(pool);  // ties in confidence resolve in shuffled order
    std::stable_sort(pool.begin(), pool.end(), [&](int64_t a, int64_t b) {
      return pseudo.confidence[static_cast<size_t>(a)] > pseudo.confidence[static_cast<size_t>(b)];
    });
    if (static_cast<int64_t>(pool.size()) < want) {
      std::cerr << "warning: only " << pool.size() << " " << cls << " pixels available, "
                << want << " requested\n";
      want = static_cast<int64_t>(pool.size());
    }
    pool.resize(static_cast<size_t>(want));
  };
  take(changed, n_changed, "changed");
  take(unchanged, n_unchanged, "unchanged");

  TrainingPixels sel;
  sel.coords.reserve(changed.size() + unchanged.size());
  for (int64_t p : changed) {
    sel.coords.emplace_back(p / pseudo.width, p % pseudo.width);
    sel.labels.push_back(1);
  }
  for (int64_t p : unchanged) {
    sel.coords.emplace_back(p / pseudo.width, p % pseudo.width);
    sel.labels.push_back(0);
  }
  return sel;
}

void save_pseudo_map(const PseudoLabelMap& map, const std::string& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw IoError("cannot create " + path + ": " + ec.message());

  std::ofstream meta(fs::path(path) / "meta", std::ios::trunc);
  if (!meta) throw IoError("cannot create " + path + "/meta");
  meta << "H " << map.height << "\nW " << map.width << "\n";
  meta.close();

  std::ofstream lab(fs::path(path) / "labels.raw", std::ios::binary | std::ios::trunc);
  lab.write(reinterpret_cast<const char*>(map.labels.data()),
            static_cast<std::streamsize>(map.labels.size()));
  if (!lab) throw IoError("write failed on " + path + "/labels.raw");

  std::vector<float> conf(map.confidence.begin(), map.confidence.end());
  std::ofstream cf(fs::path(path) / "confidence.raw", std::ios::binary | std::ios::trunc);
  cf.write(reinterpret_cast<const char*>(conf.data()),
           static_cast<std::streamsize>(conf.size() * sizeof(float)));
  if (!cf) throw IoError("write failed on " + path + "/confidence.raw");
}

PseudoLabelMap load_pseudo_map(const std::string& path) {
  namespace fs = std::filesystem;
  std::ifstream meta(fs::path(path) / "meta");
  if (!meta) throw IoError("cannot open " + path + "/meta");
  PseudoLabelMap map;
  std::string key;
  while (meta >> key) {
    if (key == "H")
      meta >> map.height;
    else if (key == "W")
      meta >> map.width;
    else
      throw IoError(path + "/meta: unknown field " + key);
  }
  require(map.height > 0 && map.width > 0, "pseudo map manifest lacks dimensions");
  const size_t px = static_cast<size_t>(map.height * map.width);

  std::ifstream lab(fs::path(path) / "labels.raw", std::ios::binary);
  if (!lab) throw IoError("cannot open " + path + "/labels.raw");
  map.labels.resize(px);
  lab.read(reinterpret_cast<char*>(map.labels.data()), static_cast<std::streamsize>(px));
  if (!lab) throw IoError("short read on " + path + "/labels.raw");

  std::ifstream cf(fs::path(path) / "confidence.raw", std::ios::binary);
  if (!cf) throw IoError("cannot open " + path + "/confidence.raw");
  std::vector<float> conf(px);
  cf.read(reinterpret_cast<char*>(conf.data()), static_cast<std::streamsize>(px * sizeof(float)));
  if (!cf) throw IoError("short read on " + path + "/confidence.raw");
  map.confidence.assign(conf.begin(), conf.end());
  return map;
}

}  // namespace hscd
