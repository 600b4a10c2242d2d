#include "hscd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hscd/rng.hpp"

namespace hscd {

void SynthConfig::validate() const {
  require(bands >= 1, "bands must be positive");
  require(height >= 7 && width >= 7, "scene must be at least 7x7 to fit a default patch");
  require(n_materials >= 2, "need at least two materials to substitute between");
  require(change_fraction >= 0.0 && change_fraction < 1.0, "change_fraction must be in [0,1)");
  require(gain_lo > 0.0 && gain_lo <= gain_hi, "illumination gain interval must be positive");
  require(noise_sigma >= 0.0, "noise_sigma must be non-negative");
}

namespace {

// Smooth random reflectance curve: low-pass filtered noise, integrated, then
// min-max normalized to [0,1].
std::vector<double> make_endmember(int64_t bands, Rng& rng) {
  std::vector<double> raw(static_cast<size_t>(bands));
  for (auto& v : raw) v = rng.normal();
  const int64_t win = std::max<int64_t>(3, bands / 8);
  std::vector<double> smooth(raw.size());
  for (int64_t i = 0; i < bands; ++i) {
    double acc = 0.0;
    int64_t cnt = 0;
    for (int64_t j = std::max<int64_t>(0, i - win); j <= std::min(bands - 1, i + win); ++j) {
      acc += raw[static_cast<size_t>(j)];
      ++cnt;
    }
    smooth[static_cast<size_t>(i)] = acc / static_cast<double>(cnt);
  }
  std::vector<double> curve(smooth.size());
  double run = 0.0;
  for (int64_t i = 0; i < bands; ++i) {
    run += smooth[static_cast<size_t>(i)];
    curve[static_cast<size_t>(i)] = run;
  }
  const auto [lo, hi] = std::minmax_element(curve.begin(), curve.end());
  const double span = *hi - *lo;
  for (auto& v : curve) v = span > 1e-12 ? (v - *lo) / span : 0.5;
  return curve;
}

double max_abs_gap(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

BitemporalScene generate_scene(const SynthConfig& cfg) {
  cfg.validate();
  const int64_t C = cfg.bands, H = cfg.height, W = cfg.width, M = cfg.n_materials;
  const int64_t px = H * W;

  // Endmember library; redraw near-duplicates so substitution stays visible.
  std::vector<std::vector<double>> endmembers;
  for (int64_t m = 0; m < M; ++m) {
    for (uint64_t attempt = 0;; ++attempt) {
      Rng rng = substream_rng(cfg.seed, "synth.endmember",
                              {static_cast<uint64_t>(m), attempt});
      auto curve = make_endmember(C, rng);
      const bool distinct = std::all_of(endmembers.begin(), endmembers.end(),
                                        [&](const auto& e) { return max_abs_gap(e, curve) >= 0.15; });
      if (distinct || attempt >= 64) {
        endmembers.push_back(std::move(curve));
        break;
      }
    }
  }

  // First-date material map: nearest-seed regions, every material represented.
  std::vector<int> assign1(static_cast<size_t>(px));
  {
    Rng rng = substream_rng(cfg.seed, "synth.regions");
    const int64_t n_seeds = std::max<int64_t>(M, px / 300);
    std::vector<int64_t> sy(static_cast<size_t>(n_seeds)), sx(static_cast<size_t>(n_seeds));
    std::vector<int> sm(static_cast<size_t>(n_seeds));
    for (int64_t s = 0; s < n_seeds; ++s) {
      sy[static_cast<size_t>(s)] = rng.uniform_int(0, H - 1);
      sx[static_cast<size_t>(s)] = rng.uniform_int(0, W - 1);
      sm[static_cast<size_t>(s)] = static_cast<int>(s % M);
    }
    rng.shuffle(sm);
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        int64_t best = 0;
        int64_t best_d = std::numeric_limits<int64_t>::max();
        for (int64_t s = 0; s < n_seeds; ++s) {
          const int64_t dy = y - sy[static_cast<size_t>(s)];
          const int64_t dx = x - sx[static_cast<size_t>(s)];
          const int64_t d = dy * dy + dx * dx;
          if (d < best_d) {
            best_d = d;
            best = s;
          }
        }
        assign1[static_cast<size_t>(y * W + x)] = sm[static_cast<size_t>(best)];
      }
  }

  // Per-pixel mixing jitter, fixed across dates so only the dominant material
  // changes inside blobs.
  std::vector<double> jitter(static_cast<size_t>(px * M));
  {
    Rng rng = substream_rng(cfg.seed, "synth.abundance");
    for (auto& v : jitter) v = rng.uniform();
  }

  // True change: random region growth substituting a different material.
  std::vector<int> assign2 = assign1;
  const int64_t target = std::llround(cfg.change_fraction * static_cast<double>(px));
  if (target > 0) {
    Rng rng = substream_rng(cfg.seed, "synth.blobs");
    int64_t changed = 0;
    for (int attempt = 0; attempt < 1000 && changed < target; ++attempt) {
      const int64_t s = rng.uniform_int(0, px - 1);
      if (assign2[static_cast<size_t>(s)] != assign1[static_cast<size_t>(s)]) continue;
      const int mat_new =
          static_cast<int>(rng.uniform_int(0, M - 1));
      if (mat_new == assign1[static_cast<size_t>(s)]) continue;
      const int64_t blob_target =
          std::min(target - changed, rng.uniform_int(std::max<int64_t>(8, target / 8),
                                                     std::max<int64_t>(16, target / 3)));
      std::vector<int64_t> frontier{s};
      int64_t blob_size = 0;
      while (!frontier.empty() && blob_size < blob_target) {
        const int64_t pick = rng.uniform_int(0, static_cast<int64_t>(frontier.size()) - 1);
        const int64_t p = frontier[static_cast<size_t>(pick)];
        frontier[static_cast<size_t>(pick)] = frontier.back();
        frontier.pop_back();
        if (assign2[static_cast<size_t>(p)] != assign1[static_cast<size_t>(p)]) continue;
        if (assign1[static_cast<size_t>(p)] == mat_new) continue;
        assign2[static_cast<size_t>(p)] = mat_new;
        ++blob_size;
        ++changed;
        const int64_t y = p / W, x = p % W;
        if (y > 0) frontier.push_back(p - W);
        if (y + 1 < H) frontier.push_back(p + W);
        if (x > 0) frontier.push_back(p - 1);
        if (x + 1 < W) frontier.push_back(p + 1);
      }
    }
  }

  // Smooth per-band illumination gain: cubic in normalized band index,
  // rescaled onto the configured interval.
  std::vector<double> gain(static_cast<size_t>(C), 0.5 * (cfg.gain_lo + cfg.gain_hi));
  {
    Rng rng = substream_rng(cfg.seed, "synth.gain");
    double coef[4];
    for (auto& c : coef) c = rng.normal();
    std::vector<double> raw(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) {
      const double x = C > 1 ? static_cast<double>(c) / static_cast<double>(C - 1) : 0.0;
      raw[static_cast<size_t>(c)] = coef[0] + x * (coef[1] + x * (coef[2] + x * coef[3]));
    }
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double span = *hi - *lo;
    if (span > 1e-12 && cfg.gain_hi > cfg.gain_lo)
      for (int64_t c = 0; c < C; ++c)
        gain[static_cast<size_t>(c)] =
            cfg.gain_lo + (raw[static_cast<size_t>(c)] - *lo) / span * (cfg.gain_hi - cfg.gain_lo);
  }

  // Mix spectra. Dominance weight keeps the assigned material clearly on top
  // while the jitter varies abundances from pixel to pixel.
  constexpr double kDominance = 3.0;
  auto mix = [&](const std::vector<int>& assign, int64_t p, std::vector<double>& out_abund) {
    double z = 0.0;
    for (int64_t m = 0; m < M; ++m) {
      const double w =
          (assign[static_cast<size_t>(p)] == m ? kDominance : 0.0) + jitter[static_cast<size_t>(p * M + m)];
      out_abund[static_cast<size_t>(m)] = std::exp(w);
      z += out_abund[static_cast<size_t>(m)];
    }
    for (int64_t m = 0; m < M; ++m) out_abund[static_cast<size_t>(m)] /= z;
  };

  BitemporalScene scene;
  scene.name = cfg.name;
  scene.bands = C;
  scene.height = H;
  scene.width = W;
  scene.t1.resize(static_cast<size_t>(C * px));
  scene.t2.resize(static_cast<size_t>(C * px));
  scene.labels.resize(static_cast<size_t>(px));

  Rng noise = substream_rng(cfg.seed, "synth.noise");
  std::vector<double> a1(static_cast<size_t>(M)), a2(static_cast<size_t>(M));
  for (int64_t p = 0; p < px; ++p) {
    mix(assign1, p, a1);
    const bool is_changed = assign2[static_cast<size_t>(p)] != assign1[static_cast<size_t>(p)];
    if (is_changed)
      mix(assign2, p, a2);
    else
      a2 = a1;
    scene.labels[static_cast<size_t>(p)] = is_changed ? 1 : 0;
    for (int64_t c = 0; c < C; ++c) {
      double s1 = 0.0, s2 = 0.0;
      for (int64_t m = 0; m < M; ++m) {
        s1 += a1[static_cast<size_t>(m)] * endmembers[static_cast<size_t>(m)][static_cast<size_t>(c)];
        s2 += a2[static_cast<size_t>(m)] * endmembers[static_cast<size_t>(m)][static_cast<size_t>(c)];
      }
      scene.t1[static_cast<size_t>(c * px + p)] = static_cast<float>(s1);
      scene.t2[static_cast<size_t>(c * px + p)] =
          static_cast<float>(gain[static_cast<size_t>(c)] * s2 + cfg.noise_sigma * noise.normal());
    }
  }

  scene.validate();
  return scene;
}

}  // namespace hscd
