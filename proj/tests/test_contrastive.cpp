#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "hscd/contrastive.hpp"
#include "hscd/synth.hpp"

using namespace hscd;

namespace {

// Literal double-loop evaluation: stack interleaved, cosine similarities by
// explicit dots, every denominator summed over all non-self samples.
double brute_force_nt_xent(const Array& z1, const Array& z2, double tau) {
  const int64_t q = z1.rows();
  const int64_t d = z1.cols();
  const int64_t m = 2 * q;
  std::vector<std::vector<double>> z(static_cast<size_t>(m), std::vector<double>(d));
  for (int64_t i = 0; i < q; ++i)
    for (int64_t c = 0; c < d; ++c) {
      z[static_cast<size_t>(2 * i)][static_cast<size_t>(c)] = z1.at(i, c);
      z[static_cast<size_t>(2 * i + 1)][static_cast<size_t>(c)] = z2.at(i, c);
    }
  auto sim = [&](int64_t a, int64_t b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int64_t c = 0; c < d; ++c) {
      dot += z[static_cast<size_t>(a)][static_cast<size_t>(c)] *
             z[static_cast<size_t>(b)][static_cast<size_t>(c)];
      na += z[static_cast<size_t>(a)][static_cast<size_t>(c)] *
            z[static_cast<size_t>(a)][static_cast<size_t>(c)];
      nb += z[static_cast<size_t>(b)][static_cast<size_t>(c)] *
            z[static_cast<size_t>(b)][static_cast<size_t>(c)];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };
  auto term = [&](int64_t i, int64_t j) {
    double denom = 0.0;
    for (int64_t k = 0; k < m; ++k)
      if (k != i) denom += std::exp(sim(i, k) / tau);
    return -std::log(std::exp(sim(i, j) / tau) / denom);
  };
  double total = 0.0;
  for (int64_t k = 1; k <= q; ++k)
    total += term(2 * k - 2, 2 * k - 1) + term(2 * k - 1, 2 * k - 2);
  return total / static_cast<double>(m);
}

}  // namespace

TEST_CASE("identical embeddings collapse to log 3 at any temperature") {
  Array z({2, 3});
  for (int64_t i = 0; i < z.size(); ++i) z[i] = (i % 3 == 0) ? 0.4 : -1.1;
  for (const double tau : {0.1, 0.5, 1.0}) {
    const double loss = nt_xent_loss(z, z, tau);
    CHECK(std::abs(loss - 1.0986122886681096914) <= 1e-12);
  }
}

TEST_CASE("orthogonal pairs at tau 0.5 match the hand-evaluated value") {
  Array z1({2, 4}), z2({2, 4});
  z1.at(0, 0) = 1.0;
  z1.at(1, 1) = 1.0;
  z2.at(0, 0) = 1.0;
  z2.at(1, 1) = 1.0;
  const double loss = nt_xent_loss(z1, z2, 0.5);
  CHECK(std::abs(loss - 0.23954476622188450487) <= 1e-12);
}

TEST_CASE("vectorized loss equals the brute-force double loop") {
  int batches = 0;
  for (uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng = substream_rng(400, "ntxent", {trial});
    const int64_t q = rng.uniform_int(2, 8);
    const int64_t d = rng.uniform_int(2, 10);
    const Array z1 = Array::randn({q, d}, rng);
    const Array z2 = Array::randn({q, d}, rng);
    for (const double tau : {0.1, 0.5, 1.0}) {
      const double fast = nt_xent_loss(z1, z2, tau);
      const double slow = brute_force_nt_xent(z1, z2, tau);
      CHECK(std::abs(fast - slow) <= 1e-6);
    }
    ++batches;
  }
  CHECK(batches == 100);
}

TEST_CASE("loss is invariant to positive rescaling and to argument order") {
  Rng rng(17);
  const Array z1 = Array::randn({5, 6}, rng);
  const Array z2 = Array::randn({5, 6}, rng);
  const double base = nt_xent_loss(z1, z2, 0.5);

  Array s1 = z1, s2 = z2;
  for (int64_t i = 0; i < s1.size(); ++i) s1[i] *= 7.3;
  for (int64_t i = 0; i < s2.size(); ++i) s2[i] *= 7.3;
  CHECK(std::abs(nt_xent_loss(s1, s2, 0.5) - base) <= 1e-10);

  CHECK(std::abs(nt_xent_loss(z2, z1, 0.5) - base) <= 1e-12);
}

TEST_CASE("analytic contrastive gradients match finite differences") {
  Rng rng(23);
  const Array a1 = Array::randn({3, 5}, rng);
  const Array a2 = Array::randn({3, 5}, rng);
  const double tau = 0.5;

  const ag::Var v1 = ag::leaf(a1, true);
  const ag::Var v2 = ag::leaf(a2, true);
  const ag::Var loss = nt_xent_loss_var(v1, v2, tau);
  ag::backward(loss);

  const double h = 1e-6;
  const double tol = 1e-5;
  Array m1 = a1, m2 = a2;
  auto value = [&]() { return nt_xent_loss(m1, m2, tau); };
  for (int side = 0; side < 2; ++side) {
    Array& m = side == 0 ? m1 : m2;
    const ag::Var& v = side == 0 ? v1 : v2;
    for (int64_t i = 0; i < m.size(); ++i) {
      const double orig = m[i];
      m[i] = orig + h;
      const double lp = value();
      m[i] = orig - h;
      const double lm = value();
      m[i] = orig;
      const double num = (lp - lm) / (2.0 * h);
      const double ana = v->grad[i];
      CHECK(std::abs(num - ana) <= tol * (1.0 + std::abs(num) + std::abs(ana)));
    }
  }
}

TEST_CASE("degenerate contrastive inputs are rejected") {
  Rng rng(5);
  const Array one = Array::randn({1, 4}, rng);
  CHECK_THROWS_AS(nt_xent_loss(one, one, 0.5), InvariantError);

  const Array z = Array::randn({3, 4}, rng);
  CHECK_THROWS_AS(nt_xent_loss(z, z, 0.0), InvariantError);
  CHECK_THROWS_AS(nt_xent_loss(z, z, -1.0), InvariantError);
  CHECK_THROWS_AS(nt_xent_loss(z, Array::randn({3, 5}, rng), 0.5), InvariantError);

  Array dead = z;
  for (int64_t c = 0; c < 4; ++c) dead.at(1, c) = 0.0;
  CHECK_THROWS_AS(nt_xent_loss(z, dead, 0.5), InvariantError);
}

TEST_CASE("encoder emits deterministic shapes and rejects band mismatch") {
  EncoderConfig cfg;
  cfg.bands = 10;  // trailing chunk of 2 bands
  cfg.chunk = 4;
  cfg.token_dim = 16;
  cfg.n_heads = 4;
  cfg.depth = 2;
  cfg.feature_dim = 12;
  cfg.proj_dim = 8;
  Rng rng(31);
  const EncoderState st = init_encoder(cfg, rng);
  CHECK(st.config.n_chunks() == 3);

  const Array spectra = Array::randn({6, 10}, rng);
  const Encoded a = encode(st, spectra);
  const Encoded b = encode(st, spectra);
  CHECK(a.features.shape() == std::vector<int64_t>{6, 12});
  CHECK(a.projections.shape() == std::vector<int64_t>{6, 8});
  CHECK(a.features.all_finite());
  CHECK(max_abs_diff(a.features, b.features) == 0.0);
  CHECK(max_abs_diff(a.projections, b.projections) == 0.0);

  CHECK_THROWS_AS(encode(st, Array::randn({6, 9}, rng)), InvariantError);

  Rng r1(42), r2(42);
  const EncoderState s1 = init_encoder(cfg, r1);
  const EncoderState s2 = init_encoder(cfg, r2);
  CHECK(s1.params.flatten() == s2.params.flatten());
}

TEST_CASE("encoding a batch matches encoding items one at a time") {
  EncoderConfig cfg;
  cfg.bands = 8;
  cfg.token_dim = 16;
  cfg.n_heads = 2;
  cfg.feature_dim = 12;
  cfg.proj_dim = 6;
  Rng rng(37);
  const EncoderState st = init_encoder(cfg, rng);
  const Array spectra = Array::randn({5, 8}, rng);
  const Encoded whole = encode(st, spectra);
  for (int64_t i = 0; i < 5; ++i) {
    Array row({1, 8});
    for (int64_t c = 0; c < 8; ++c) row[c] = spectra.at(i, c);
    const Encoded one = encode(st, row);
    double worst = 0.0;
    for (int64_t c = 0; c < 12; ++c)
      worst = std::max(worst, std::abs(one.features[c] - whole.features.at(i, c)));
    for (int64_t c = 0; c < 6; ++c)
      worst = std::max(worst, std::abs(one.projections[c] - whole.projections.at(i, c)));
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("pair building samples distinct unchanged locations deterministically") {
  SynthConfig sc;
  sc.bands = 6;
  sc.height = 16;
  sc.width = 16;
  sc.change_fraction = 0.2;
  sc.seed = 9;
  const BitemporalScene scene = generate_scene(sc);

  PseudoLabelMap pseudo;
  pseudo.height = scene.height;
  pseudo.width = scene.width;
  pseudo.labels = scene.labels;
  pseudo.confidence.assign(static_cast<size_t>(scene.pixels()), 1.0);

  Rng r1(3), r2(3);
  const PairBatch a = build_pairs(scene, pseudo, 8, r1);
  const PairBatch b = build_pairs(scene, pseudo, 8, r2);
  CHECK(a.pairs() == 8);
  CHECK(a.coords == b.coords);
  CHECK(max_abs_diff(a.anchors, b.anchors) == 0.0);

  std::set<std::pair<int64_t, int64_t>> seen(a.coords.begin(), a.coords.end());
  CHECK(seen.size() == 8);
  for (const auto& [y, x] : a.coords) CHECK(scene.label_at(y, x) == 0);
  for (int64_t i = 0; i < a.pairs(); ++i)
    for (int64_t c = 0; c < scene.bands; ++c) {
      CHECK(a.anchors.at(i, c) ==
            static_cast<double>(scene.at(Phase::T1, c, a.coords[static_cast<size_t>(i)].first,
                                         a.coords[static_cast<size_t>(i)].second)));
      CHECK(a.positives.at(i, c) ==
            static_cast<double>(scene.at(Phase::T2, c, a.coords[static_cast<size_t>(i)].first,
                                         a.coords[static_cast<size_t>(i)].second)));
    }

  // clamps to the available pool, errors below two
  Rng r3(4);
  const PairBatch big = build_pairs(scene, pseudo, 100000, r3);
  int64_t unchanged = 0;
  for (const uint8_t v : pseudo.labels) unchanged += v == 0 ? 1 : 0;
  CHECK(big.pairs() == unchanged);

  PseudoLabelMap one = pseudo;
  one.labels.assign(one.labels.size(), 1);
  one.labels[5] = 0;
  Rng r4(5);
  CHECK_THROWS_AS(build_pairs(scene, one, 8, r4), InvariantError);
}

TEST_CASE("contrastive training aligns unchanged pairs more than changed ones") {
  SynthConfig sc;
  sc.bands = 8;
  sc.height = 24;
  sc.width = 24;
  sc.change_fraction = 0.2;
  sc.seed = 4;
  const BitemporalScene scene = generate_scene(sc);

  PseudoLabelMap pseudo;
  pseudo.height = scene.height;
  pseudo.width = scene.width;
  pseudo.labels = scene.labels;
  pseudo.confidence.assign(static_cast<size_t>(scene.pixels()), 1.0);

  EncoderConfig cfg;
  cfg.bands = 8;
  cfg.chunk = 4;
  cfg.token_dim = 16;
  cfg.n_heads = 2;
  cfg.depth = 2;
  cfg.feature_dim = 16;
  cfg.proj_dim = 8;
  Rng rng = substream_rng(21, "test.ctcl");
  EncoderState st = init_encoder(cfg, rng);

  nn::AdamW opt(1e-3);
  for (int step = 0; step < 80; ++step) {
    const PairBatch batch = build_pairs(scene, pseudo, 24, rng);
    nn::TapeCtx ctx(st.params, true);
    const EncodedVars e1 = encode_tape(ctx, st, batch.anchors);
    const EncodedVars e2 = encode_tape(ctx, st, batch.positives);
    const ag::Var loss = nt_xent_loss_var(e1.projections, e2.projections, cfg.tau);
    ag::backward(loss);
    opt.step(st.params, ctx);
  }

  // mean cross-phase cosine of projections, grouped by the true label
  Array t1({scene.pixels(), scene.bands}), t2({scene.pixels(), scene.bands});
  for (int64_t y = 0; y < scene.height; ++y)
    for (int64_t x = 0; x < scene.width; ++x)
      for (int64_t c = 0; c < scene.bands; ++c) {
        t1.at(y * scene.width + x, c) = static_cast<double>(scene.at(Phase::T1, c, y, x));
        t2.at(y * scene.width + x, c) = static_cast<double>(scene.at(Phase::T2, c, y, x));
      }
  const Encoded e1 = encode(st, t1);
  const Encoded e2 = encode(st, t2);
  double cos_unchanged = 0.0, cos_changed = 0.0;
  int64_t n_unchanged = 0, n_changed = 0;
  for (int64_t i = 0; i < scene.pixels(); ++i) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int64_t c = 0; c < cfg.proj_dim; ++c) {
      dot += e1.projections.at(i, c) * e2.projections.at(i, c);
      na += e1.projections.at(i, c) * e1.projections.at(i, c);
      nb += e2.projections.at(i, c) * e2.projections.at(i, c);
    }
    const double cs = dot / (std::sqrt(na) * std::sqrt(nb));
    if (scene.labels[static_cast<size_t>(i)] == 0) {
      cos_unchanged += cs;
      ++n_unchanged;
    } else {
      cos_changed += cs;
      ++n_changed;
    }
  }
  cos_unchanged /= static_cast<double>(n_unchanged);
  cos_changed /= static_cast<double>(n_changed);
  CHECK(cos_unchanged > cos_changed);
}
