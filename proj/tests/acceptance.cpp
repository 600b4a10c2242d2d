// Acceptance suite: numbered end-to-end checks of the change-detection
// pipeline, from closed-form diffusion identities up to full training runs
// on the synthetic benchmark. Each check prints exactly one PASS/FAIL line.
//
//   acceptance <1..9|all> [--workspace DIR]
//
// Checks that train models cache their artifacts under the workspace and
// reuse anything a previous invocation left there, so the suite can run
// check by check. The cache is keyed by a fingerprint of the benchmark
// configuration and is wiped automatically when the configuration changes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "hscd/array.hpp"
#include "hscd/cd_head.hpp"
#include "hscd/checkpoint.hpp"
#include "hscd/config.hpp"
#include "hscd/contrastive.hpp"
#include "hscd/diffusion.hpp"
#include "hscd/metrics.hpp"
#include "hscd/nn.hpp"
#include "hscd/pipeline.hpp"
#include "hscd/predictor.hpp"
#include "hscd/pseudo_label.hpp"
#include "hscd/rng.hpp"
#include "hscd/scene.hpp"
#include "hscd/synth.hpp"

namespace fs = std::filesystem;
using namespace hscd;

namespace {

struct CheckResult {
  bool ok = true;
  std::string detail;
};

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double rel_err(double a, double b) {
  return std::abs(a - b) / (1.0 + std::abs(a) + std::abs(b));
}

// ---------------------------------------------------------------------------
// Benchmark workspace: one synthetic scene per seed plus trained artifacts,
// cached across invocations.

SynthConfig bench_scene_config(uint64_t seed) {
  SynthConfig sc;
  sc.bands = 16;
  sc.height = 64;
  sc.width = 64;
  sc.change_fraction = 0.2;
  sc.seed = seed;
  sc.name = "bench";
  return sc;
}

RunConfig bench_run_config(uint64_t seed, const std::string& scene_path) {
  RunConfig cfg = desk_profile();
  cfg.scene_path = scene_path;
  cfg.seed = seed;
  return cfg;
}

struct Variant {
  const char* name;
  bool contrastive;
  bool scdm_features;
};
constexpr Variant kFull{"full", true, true};
constexpr Variant kBase{"base", false, false};
constexpr Variant kBaseCtcl{"ctcl", true, false};
constexpr Variant kBaseScdm{"scdm", false, true};

RunConfig variant_config(uint64_t seed, const std::string& scene_path, const Variant& v) {
  RunConfig cfg = bench_run_config(seed, scene_path);
  if (!v.contrastive) cfg.lambda_con = 0.0;
  cfg.use_scdm = v.scdm_features;
  return cfg;
}

class Workspace {
 public:
  explicit Workspace(fs::path root) : root_(std::move(root)) {
    const std::string print = fingerprint();
    const fs::path marker = root_ / "fingerprint";
    std::string stored;
    if (std::ifstream in{marker}; in) {
      std::stringstream ss;
      ss << in.rdbuf();
      stored = ss.str();
    }
    if (stored != print) {
      fs::remove_all(root_);
      fs::create_directories(root_);
      std::ofstream out(marker, std::ios::trunc);
      out << print;
    }
  }

  const fs::path& root() const { return root_; }

  std::string scene(uint64_t seed) {
    const fs::path dir = root_ / ("scene-s" + std::to_string(seed));
    const fs::path path = dir / "bench";
    if (!fs::exists(path)) cmd_synth(bench_scene_config(seed), dir.string());
    return path.string();
  }

  std::string stage1(uint64_t seed) {
    const fs::path dir = root_ / ("s1-s" + std::to_string(seed));
    const fs::path ckpt = dir / "scdm";
    if (!fs::exists(ckpt)) {
      const RunConfig cfg = bench_run_config(seed, scene(seed));
      cmd_pretrain(cfg, dir.string());
    }
    return ckpt.string();
  }

  TrainOutput trained(uint64_t seed, const Variant& v) {
    const fs::path dir = root_ / (std::string(v.name) + "-s" + std::to_string(seed));
    TrainOutput out;
    out.encoder_checkpoint = (dir / "encoder").string();
    out.head_checkpoint = (dir / "head").string();
    out.pseudo_map = (dir / "pseudo").string();
    if (!fs::exists(out.head_checkpoint)) {
      const RunConfig cfg = variant_config(seed, scene(seed), v);
      out = cmd_train(cfg, stage1(seed), dir.string());
    }
    return out;
  }

  std::string change_map(uint64_t seed, const Variant& v) {
    const fs::path dir = root_ / ("map-" + std::string(v.name) + "-s" + std::to_string(seed));
    const fs::path path = dir / "map";
    if (!fs::exists(path)) {
      const RunConfig cfg = variant_config(seed, scene(seed), v);
      const TrainOutput t = trained(seed, v);
      cmd_infer(cfg, stage1(seed), t.encoder_checkpoint, t.head_checkpoint, dir.string());
    }
    return path.string();
  }

  double map_kc(uint64_t seed, const Variant& v) {
    const BitemporalScene sc = load_scene(scene(seed));
    return report(confusion(load_change_map(change_map(seed, v)), sc.labels)).kc;
  }

 private:
  std::string fingerprint() const {
    std::string s = config_text(bench_run_config(0, "<scene>"));
    const SynthConfig sc = bench_scene_config(0);
    s += "synth " + std::to_string(sc.bands) + " " + std::to_string(sc.height) + " " +
         std::to_string(sc.width) + " " + std::to_string(sc.n_materials) + " " +
         std::to_string(sc.change_fraction) + " " + std::to_string(sc.noise_sigma) + "\n";
    return s;
  }

  fs::path root_;
};

// ---------------------------------------------------------------------------
// 1: closed-form diffusion identities, forward marginal statistics, and the
// scripted single-step / fusion oracles.

CheckResult check_diffusion_process() {
  const NoiseSchedule sched = make_linear_schedule(200, 1e-4, 0.02);
  Rng rng(101);

  // x0 -> forward(t) -> estimate_x0 is the identity when the true noise is
  // handed back.
  const Array x0 = Array::randn({8, 5}, rng);
  double ident_err = 0.0;
  for (int64_t t = 0; t < sched.steps; ++t) {
    const Array eps = Array::randn({8, 5}, rng);
    const Array xt = forward_diffuse(x0, t, eps, sched);
    ident_err = std::max(ident_err, max_abs_diff(estimate_x0(xt, t, eps, sched), x0));
  }
  if (ident_err > 1e-10)
    return {false, fmt("round trip drifted: max |x0' - x0| = %.3e > 1e-10", ident_err)};

  // Forward marginal: mean sqrt(ab)*x0 within 3 standard errors, variance
  // (1 - ab) within 5 percent, measured over 1e5 draws.
  const int64_t draws = 100000;
  for (const int64_t t : {5, 100, 199}) {
    const double ab = sched.alpha_bar[static_cast<size_t>(t)];
    const double x0v = 1.3;
    const Array point = Array::full({1, 1}, x0v);
    double sum = 0.0, sumsq = 0.0;
    for (int64_t i = 0; i < draws; ++i) {
      const Array eps = Array::randn({1, 1}, rng);
      const double v = forward_diffuse(point, t, eps, sched)[0];
      sum += v;
      sumsq += v * v;
    }
    const double mean = sum / draws;
    const double var = sumsq / draws - mean * mean;
    const double want_mean = std::sqrt(ab) * x0v;
    const double want_var = 1.0 - ab;
    const double se = std::sqrt(want_var / draws);
    if (std::abs(mean - want_mean) > 3.0 * se)
      return {false, fmt("marginal mean off at t=%lld: |%.5f - %.5f| > 3*SE=%.5f",
                         static_cast<long long>(t), mean, want_mean, 3.0 * se)};
    if (std::abs(var - want_var) > 0.05 * want_var)
      return {false, fmt("marginal variance off at t=%lld: %.5f vs %.5f",
                         static_cast<long long>(t), var, want_var)};
  }

  // Scripted posterior step: mu = (xt - beta/sqrt(1-ab)*eps)/sqrt(alpha),
  // then + sigma*z, evaluated with plain scalar arithmetic.
  double step_err = 0.0;
  for (const int64_t t : {0, 1, 42, 199}) {
    const Array xt = Array::randn({3, 4}, rng);
    const Array eps_hat = Array::randn({3, 4}, rng);
    Array z = Array::zeros({3, 4});
    if (t > 0) z = Array::randn({3, 4}, rng);
    const Array got = reverse_step(xt, t, eps_hat, z, sched);
    const size_t ti = static_cast<size_t>(t);
    for (int64_t i = 0; i < xt.size(); ++i) {
      const double mu = (xt[i] - sched.beta[ti] / std::sqrt(1.0 - sched.alpha_bar[ti]) *
                                     eps_hat[i]) /
                        std::sqrt(sched.alpha[ti]);
      step_err = std::max(step_err, std::abs(got[i] - (mu + sched.sigma[ti] * z[i])));
    }
  }
  if (step_err > 1e-6)
    return {false, fmt("reverse step deviates from the scripted formula by %.3e", step_err)};

  // Scripted fusion: average of the projected difference and the two
  // concatenations, recomputed with explicit loops.
  HeadConfig hc;
  hc.feature_dim = 3;
  hc.k = 3;
  hc.depth = 1;
  hc.n_heads = 2;
  const HeadState head = init_head(hc, rng);
  const Array c1 = Array::randn({3, 3, 3}, rng);
  const Array c2 = Array::randn({3, 3, 3}, rng);
  const Array s1 = Array::randn({3, 3, 3}, rng);
  const Array s2 = Array::randn({3, 3, 3}, rng);
  const Array fused = fuse(c1, c2, s1, s2, head);
  const Array& w = head.params.entry(head.params.index_of("diff.w")).value;  // (D, 2D)
  const Array& b = head.params.entry(head.params.index_of("diff.b")).value;
  const int64_t d = hc.feature_dim;
  double fuse_err = 0.0;
  for (int64_t y = 0; y < 3; ++y) {
    for (int64_t x = 0; x < 3; ++x) {
      auto at = [&](const Array& a, int64_t c) { return a[(c * 3 + y) * 3 + x]; };
      for (int64_t o = 0; o < 2 * d; ++o) {
        double proj = b[o];
        for (int64_t c = 0; c < d; ++c) proj += (at(c1, c) - at(c2, c)) * w.at(c, o);
        const double cat_c = o < d ? at(c1, o) : at(c2, o - d);
        const double cat_s = o < d ? at(s1, o) : at(s2, o - d);
        const double want = (proj + cat_c + cat_s) / 3.0;
        fuse_err = std::max(fuse_err, std::abs(fused[(o * 3 + y) * 3 + x] - want));
      }
    }
  }
  if (fuse_err > 1e-6)
    return {false, fmt("fusion deviates from the scripted formula by %.3e", fuse_err)};

  return {true, fmt("identity %.1e, marginal stats in range, step %.1e, fusion %.1e",
                    ident_err, step_err, fuse_err)};
}

// ---------------------------------------------------------------------------
// 2: analytic gradients against central finite differences for the three
// trained losses.

CheckResult check_gradients() {
  Rng rng(202);

  // Noise-prediction loss through the full denoiser on a tiny configuration.
  {
    PredictorConfig pc;
    pc.bands = 4;
    pc.k = 3;
    pc.token_dim = 8;
    pc.n_heads = 2;
    pc.depth = 2;
    pc.feature_dim = 4;
    const NoiseSchedule sched = make_linear_schedule(200, 1e-4, 0.02);
    PredictorState st = init_predictor(pc, sched, rng);
    const int64_t n = 2;
    const Array xt = Array::randn({n * 9, 4}, rng);
    const Array eps = Array::randn({n * 9, 4}, rng);
    const std::vector<int64_t> ts{7, 120};
    const std::vector<Cond> conds{Cond::T1, Cond::None};

    auto loss_at = [&]() {
      nn::TapeCtx frozen(st.params, false);
      return noise_loss_var(predict_tape(frozen, st, xt, ts, conds), eps, n)->val[0];
    };
    nn::TapeCtx ctx(st.params, true);
    const ag::Var loss = noise_loss_var(predict_tape(ctx, st, xt, ts, conds), eps, n);
    ag::backward(loss);

    const double h = 1e-5;
    double worst = 0.0;
    int64_t checked = 0;
    for (int64_t e = 0; e < st.params.count(); ++e) {
      const ag::Var& v = ctx.cached(e);
      if (!v || !v->requires_grad) continue;  // fixed projection and band stats
      Array& p = st.params.entry(e).value;
      for (int64_t j = 0; j < p.size(); j += 7) {  // stride keeps this under a minute
        const double orig = p[j];
        p[j] = orig + h;
        const double lp = loss_at();
        p[j] = orig - h;
        const double lm = loss_at();
        p[j] = orig;
        worst = std::max(worst, rel_err((lp - lm) / (2.0 * h), v->grad[j]));
        ++checked;
      }
    }
    if (checked < 300 || worst > 1e-3)
      return {false, fmt("denoiser loss gradients: worst rel err %.2e over %lld coords", worst,
                         static_cast<long long>(checked))};
  }

  // Contrastive loss directly on embedding leaves.
  double ntxent_worst = 0.0;
  {
    Array z1 = Array::randn({4, 6}, rng);
    Array z2 = Array::randn({4, 6}, rng);
    const double tau = 0.5;
    ag::Var v1 = ag::leaf(z1, true);
    ag::Var v2 = ag::leaf(z2, true);
    ag::backward(nt_xent_loss_var(v1, v2, tau));
    const double h = 1e-6;
    for (Array* z : {&z1, &z2}) {
      const ag::Var& v = z == &z1 ? v1 : v2;
      for (int64_t j = 0; j < z->size(); ++j) {
        const double orig = (*z)[j];
        (*z)[j] = orig + h;
        const double lp = nt_xent_loss(z1, z2, tau);
        (*z)[j] = orig - h;
        const double lm = nt_xent_loss(z1, z2, tau);
        (*z)[j] = orig;
        ntxent_worst = std::max(ntxent_worst, rel_err((lp - lm) / (2.0 * h), v->grad[j]));
      }
    }
    if (ntxent_worst > 1e-5)
      return {false, fmt("contrastive loss gradients: worst rel err %.2e", ntxent_worst)};
  }

  // Change loss on logit leaves.
  double change_worst = 0.0;
  {
    Array logits = Array::randn({5, 2}, rng);
    const std::vector<uint8_t> labels{0, 1, 1, 0, 1};
    ag::Var lv = ag::leaf(logits, true);
    ag::backward(change_loss_var(lv, labels));
    const double h = 1e-6;
    for (int64_t j = 0; j < logits.size(); ++j) {
      const double orig = logits[j];
      logits[j] = orig + h;
      const double lp = change_loss(logits, labels);
      logits[j] = orig - h;
      const double lm = change_loss(logits, labels);
      logits[j] = orig;
      change_worst = std::max(change_worst, rel_err((lp - lm) / (2.0 * h), lv->grad[j]));
    }
    if (change_worst > 1e-5)
      return {false, fmt("change loss gradients: worst rel err %.2e", change_worst)};
  }

  return {true, fmt("denoiser <= 1e-3, contrastive %.1e, change %.1e", ntxent_worst,
                    change_worst)};
}

// ---------------------------------------------------------------------------
// 3: the vectorized contrastive loss against a from-scratch double loop.

double brute_force_ntxent(const Array& z1, const Array& z2, double tau) {
  const int64_t q = z1.rows(), d = z1.cols();
  const int64_t m = 2 * q;
  // views interleaved pair by pair: slot 2k is z1 row k, slot 2k+1 is z2 row k
  std::vector<std::vector<double>> rows(static_cast<size_t>(m));
  for (int64_t k = 0; k < q; ++k) {
    rows[static_cast<size_t>(2 * k)].assign(z1.data() + k * d, z1.data() + (k + 1) * d);
    rows[static_cast<size_t>(2 * k + 1)].assign(z2.data() + k * d, z2.data() + (k + 1) * d);
  }
  auto cosine = [&](int64_t a, int64_t b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      const double x = rows[static_cast<size_t>(a)][static_cast<size_t>(i)];
      const double y = rows[static_cast<size_t>(b)][static_cast<size_t>(i)];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };
  double total = 0.0;
  for (int64_t a = 0; a < m; ++a) {
    const int64_t partner = a % 2 == 0 ? a + 1 : a - 1;
    double denom = 0.0;
    for (int64_t c = 0; c < m; ++c)
      if (c != a) denom += std::exp(cosine(a, c) / tau);
    total += -std::log(std::exp(cosine(a, partner) / tau) / denom);
  }
  return total / static_cast<double>(m);
}

CheckResult check_contrastive_oracle() {
  double worst = 0.0;
  for (uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng = substream_rng(303, "acceptance.ntxent", {trial});
    const int64_t q = 2 + static_cast<int64_t>(trial % 7);
    const int64_t d = rng.uniform_int(3, 12);
    const Array z1 = Array::randn({q, d}, rng);
    const Array z2 = Array::randn({q, d}, rng);
    for (const double tau : {0.1, 0.5, 1.0}) {
      const double diff = std::abs(nt_xent_loss(z1, z2, tau) - brute_force_ntxent(z1, z2, tau));
      worst = std::max(worst, diff);
      if (diff > 1e-6)
        return {false, fmt("brute force disagrees by %.3e (Q=%lld tau=%.1f)", diff,
                           static_cast<long long>(q), tau)};
    }
  }
  // All four views identical: every candidate ties, so the loss is log 3
  // regardless of temperature.
  Array same({2, 3});
  for (int64_t i = 0; i < same.size(); ++i) same[i] = i % 3 == 0 ? 0.9 : -0.2;
  for (const double tau : {0.1, 0.5, 1.0}) {
    const double diff = std::abs(nt_xent_loss(same, same, tau) - std::log(3.0));
    if (diff > 1e-12)
      return {false, fmt("identical views at tau %.1f miss log 3 by %.3e", tau, diff)};
  }
  return {true, fmt("100 batches within %.1e of brute force; identical case hits log 3", worst)};
}

// ---------------------------------------------------------------------------
// 4: metrics against an independently coded kappa plus the worked example.

CheckResult check_metrics_oracle() {
  double worst = 0.0;
  for (uint64_t trial = 0; trial < 1000; ++trial) {
    Rng rng = substream_rng(404, "acceptance.metrics", {trial});
    Confusion c;
    c.tp = rng.uniform_int(1, 300);
    c.fp = rng.uniform_int(1, 300);
    c.tn = rng.uniform_int(1, 300);
    c.fn = rng.uniform_int(1, 300);
    const MetricsReport r = report(c);
    const long double n = static_cast<long double>(c.total());
    const long double po = (c.tp + c.tn) / n;
    const long double pe =
        ((c.tp + c.fp) * (c.tp + c.fn) + (c.fn + c.tn) * (c.fp + c.tn)) / (n * n);
    const long double kappa = (po - pe) / (1.0L - pe);
    worst = std::max(worst, static_cast<double>(std::abs(r.kc - static_cast<double>(kappa))));
    if (worst > 1e-12) return {false, fmt("kappa drifts from the oracle by %.3e", worst)};
  }
  Confusion c;
  c.tp = 50;
  c.tn = 40;
  c.fp = 5;
  c.fn = 5;
  const MetricsReport r = report(c);
  if (std::abs(r.oa - 0.90) > 1e-12 || std::abs(r.kc - 79.0 / 99.0) > 1e-12 ||
      std::abs(r.f1 - 10.0 / 11.0) > 1e-12)
    return {false, fmt("worked example: OA %.6f KC %.6f F1 %.6f", r.oa, r.kc, r.f1)};
  return {true, fmt("1000 matrices within %.1e; worked example OA 0.90 KC 0.79798 F1 0.90909",
                    worst)};
}

// ---------------------------------------------------------------------------
// 5: a scalar denoising model trained on N(2, 0.25) samples regenerates the
// distribution through the full reverse chain.

CheckResult check_scalar_generation() {
  const NoiseSchedule sched = make_linear_schedule(1000, 1e-4, 0.02);
  const int64_t temb_dim = 16;
  Rng rng(505);

  nn::ParamStore params;
  nn::Linear l1, l2, l3;
  l1.init(params, "l1", 1 + temb_dim, 64, rng);
  l2.init(params, "l2", 64, 64, rng);
  l3.init(params, "l3", 64, 1, rng);

  auto build_input = [&](const Array& xt, const std::vector<int64_t>& ts) {
    Array in({xt.rows(), 1 + temb_dim});
    for (int64_t i = 0; i < xt.rows(); ++i) {
      in.at(i, 0) = xt[i];
      const Array emb = nn::timestep_embedding(ts[static_cast<size_t>(i)], temb_dim);
      for (int64_t j = 0; j < temb_dim; ++j) in.at(i, 1 + j) = emb[j];
    }
    return in;
  };
  auto forward = [&](nn::TapeCtx& ctx, const Array& input) {
    ag::Var h = ag::gelu(l1.apply(ctx, ag::constant(input)));
    h = ag::gelu(l2.apply(ctx, h));
    return l3.apply(ctx, h);
  };

  const double data_mean = 2.0, data_sd = 0.5;
  nn::AdamW opt(1e-3);
  const int64_t steps = 2500, batch = 256;
  for (int64_t step = 0; step < steps; ++step) {
    Array x0({batch, 1}), eps({batch, 1});
    std::vector<int64_t> ts(static_cast<size_t>(batch));
    for (int64_t i = 0; i < batch; ++i) {
      x0[i] = data_mean + data_sd * rng.normal();
      eps[i] = rng.normal();
      ts[static_cast<size_t>(i)] = rng.uniform_int(0, sched.steps - 1);
    }
    Array xt({batch, 1});
    for (int64_t i = 0; i < batch; ++i) {
      const double ab = sched.alpha_bar[static_cast<size_t>(ts[static_cast<size_t>(i)])];
      xt[i] = std::sqrt(ab) * x0[i] + std::sqrt(1.0 - ab) * eps[i];
    }
    nn::TapeCtx ctx(params, true);
    const ag::Var loss = noise_loss_var(forward(ctx, build_input(xt, ts)), eps, batch);
    ag::backward(loss);
    opt.step(params, ctx);
  }

  const int64_t n = 10000;
  Array x = Array::randn({n, 1}, rng);
  std::vector<int64_t> ts(static_cast<size_t>(n));
  for (int64_t t = sched.steps - 1; t >= 0; --t) {
    std::fill(ts.begin(), ts.end(), t);
    nn::TapeCtx frozen(params, false);
    const Array eps_hat = forward(frozen, build_input(x, ts))->val;
    Array z = Array::zeros({n, 1});
    if (t > 0) z = Array::randn({n, 1}, rng);
    x = reverse_step(x, t, eps_hat, z, sched);
  }
  double sum = 0.0, sumsq = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    sum += x[i];
    sumsq += x[i] * x[i];
  }
  const double mean = sum / n;
  const double sd = std::sqrt(std::max(0.0, sumsq / n - mean * mean));
  if (std::abs(mean - data_mean) > 0.1 || std::abs(sd - data_sd) > 0.1)
    return {false, fmt("sampled mean %.4f (want 2.0 +- 0.1), sd %.4f (want 0.5 +- 0.1)", mean,
                       sd)};
  return {true, fmt("10000 samples: mean %.4f, sd %.4f", mean, sd)};
}

// ---------------------------------------------------------------------------
// 6: the benchmark pipeline beats its own pseudo-labels. Medians over three
// seeds.

CheckResult check_benchmark(Workspace& ws) {
  std::vector<double> pseudo_kc, full_kc, full_oa;
  for (const uint64_t seed : {0, 1, 2}) {
    const BitemporalScene scene = load_scene(ws.scene(seed));
    const TrainOutput t = ws.trained(seed, kFull);
    const PseudoLabelMap pseudo = load_pseudo_map(t.pseudo_map);
    ChangeMap pm;
    pm.scene_name = scene.name;
    pm.height = pseudo.height;
    pm.width = pseudo.width;
    pm.decisions = pseudo.labels;
    pseudo_kc.push_back(report(confusion(pm, scene.labels)).kc);
    const MetricsReport full =
        report(confusion(load_change_map(ws.change_map(seed, kFull)), scene.labels));
    full_kc.push_back(full.kc);
    full_oa.push_back(full.oa);
  }
  const double pkc = median(pseudo_kc), fkc = median(full_kc), foa = median(full_oa);
  const std::string detail = fmt("median pseudo KC %.3f, full KC %.3f, full OA %.3f", pkc, fkc,
                                 foa);
  if (pkc < 0.40) return {false, detail + " (pseudo KC below 0.40)"};
  if (fkc < 0.60) return {false, detail + " (full KC below 0.60)"};
  if (foa < 0.85) return {false, detail + " (full OA below 0.85)"};
  if (fkc <= pkc) return {false, detail + " (full does not beat pseudo)"};
  return {true, detail};
}

// ---------------------------------------------------------------------------
// 7: ablations ordered as expected. Medians over five seeds.

CheckResult check_ablations(Workspace& ws) {
  std::vector<double> base, ctcl, scdm, full;
  for (const uint64_t seed : {0, 1, 2, 3, 4}) {
    base.push_back(ws.map_kc(seed, kBase));
    ctcl.push_back(ws.map_kc(seed, kBaseCtcl));
    scdm.push_back(ws.map_kc(seed, kBaseScdm));
    full.push_back(ws.map_kc(seed, kFull));
  }
  const double mb = median(base), mc = median(ctcl), ms = median(scdm), mf = median(full);
  const std::string detail =
      fmt("median KC: base %.3f, +contrastive %.3f, +denoiser-features %.3f, full %.3f", mb, mc,
          ms, mf);
  if (mc < mb) return {false, detail + " (contrastive term hurts)"};
  if (ms < mb) return {false, detail + " (denoiser features hurt)"};
  if (mf < mc || mf < ms) return {false, detail + " (full model is not the best)"};
  if (mf - mb < 0.05) return {false, detail + " (full lead below 0.05)"};
  return {true, detail};
}

// ---------------------------------------------------------------------------
// 8: the trained encoder separates changed from unchanged pixels in
// projection space.

CheckResult check_embedding_separation(Workspace& ws) {
  const uint64_t seed = 0;
  const BitemporalScene scene = load_scene(ws.scene(seed));
  const PredictorState pred = load_predictor(ws.stage1(seed));
  const TrainOutput t = ws.trained(seed, kFull);
  const EncoderState enc = load_encoder(t.encoder_checkpoint);

  const int64_t px = scene.pixels();
  Array proj[2];
  for (const Phase phase : {Phase::T1, Phase::T2}) {
    Array rows({px, scene.bands});
    for (int64_t y = 0; y < scene.height; ++y)
      for (int64_t x = 0; x < scene.width; ++x)
        for (int64_t c = 0; c < scene.bands; ++c)
          rows.at(y * scene.width + x, c) = scene.at(phase, c, y, x);
    standardize_rows(pred, rows);
    proj[phase == Phase::T1 ? 0 : 1] = encode(enc, rows).projections;
  }

  double sum_gap[2] = {0.0, 0.0};
  int64_t count[2] = {0, 0};
  const int64_t d = proj[0].cols();
  for (int64_t i = 0; i < px; ++i) {
    const uint8_t label = scene.labels[static_cast<size_t>(i)];
    if (label > 1) continue;
    double dot = 0.0, n1 = 0.0, n2 = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double a = proj[0].at(i, j), b = proj[1].at(i, j);
      dot += a * b;
      n1 += a * a;
      n2 += b * b;
    }
    sum_gap[label] += dot / std::max(std::sqrt(n1) * std::sqrt(n2), 1e-12);
    ++count[label];
  }
  const double unchanged = sum_gap[0] / std::max<int64_t>(count[0], 1);
  const double changed = sum_gap[1] / std::max<int64_t>(count[1], 1);
  const std::string detail = fmt("mean cross-date cosine: unchanged %.3f, changed %.3f",
                                 unchanged, changed);
  if (unchanged - changed < 0.1) return {false, detail + " (margin below 0.1)"};
  return {true, detail};
}

// ---------------------------------------------------------------------------
// 9: a from-scratch rerun of the whole pipeline reproduces the stored change
// map bit for bit.

CheckResult check_reproducibility(Workspace& ws) {
  const uint64_t seed = 0;
  const ChangeMap reference = load_change_map(ws.change_map(seed, kFull));

  const fs::path dir = ws.root() / "rerun-s0";
  fs::remove_all(dir);
  const std::string scene_path = cmd_synth(bench_scene_config(seed), (dir / "scenes").string());
  const RunConfig cfg = bench_run_config(seed, scene_path);
  const PretrainOutput s1 = cmd_pretrain(cfg, (dir / "s1").string());
  const TrainOutput s2 = cmd_train(cfg, s1.checkpoint, (dir / "s2").string());
  const std::string map_path = cmd_infer(cfg, s1.checkpoint, s2.encoder_checkpoint,
                                         s2.head_checkpoint, (dir / "infer").string());
  const ChangeMap rerun = load_change_map(map_path);
  fs::remove_all(dir);

  if (rerun.height != reference.height || rerun.width != reference.width)
    return {false, "rerun produced a differently shaped map"};
  int64_t diffs = 0;
  for (size_t i = 0; i < rerun.decisions.size(); ++i)
    if (rerun.decisions[i] != reference.decisions[i]) ++diffs;
  if (diffs > 0)
    return {false, fmt("rerun disagrees on %lld of %zu pixels", static_cast<long long>(diffs),
                       reference.decisions.size())};
  return {true, fmt("identical decisions on all %zu pixels", reference.decisions.size())};
}

}  // namespace

int main(int argc, char** argv) {
  std::string which;
  fs::path ws_root = "acceptance-ws";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--workspace" && i + 1 < argc)
      ws_root = argv[++i];
    else if (which.empty())
      which = arg;
    else {
      fprintf(stderr, "usage: acceptance <1..9|all> [--workspace DIR]\n");
      return 2;
    }
  }
  if (which.empty()) which = "all";

  Workspace ws(ws_root);
  using Check = std::function<CheckResult()>;
  const std::vector<std::pair<const char*, Check>> checks = {
      {"diffusion process oracles", check_diffusion_process},
      {"loss gradients vs finite differences", check_gradients},
      {"contrastive loss vs brute force", check_contrastive_oracle},
      {"metrics vs independent kappa", check_metrics_oracle},
      {"scalar diffusion regenerates N(2, 0.25)", check_scalar_generation},
      {"benchmark beats its pseudo-labels", [&] { return check_benchmark(ws); }},
      {"ablations are ordered", [&] { return check_ablations(ws); }},
      {"encoder separates change in projection space", [&] { return check_embedding_separation(ws); }},
      {"identical seeds give identical maps", [&] { return check_reproducibility(ws); }},
  };

  std::vector<int> selected;
  if (which == "all") {
    for (int i = 1; i <= 9; ++i) selected.push_back(i);
  } else {
    const int n = std::atoi(which.c_str());
    if (n < 1 || n > 9) {
      fprintf(stderr, "unknown check %s\n", which.c_str());
      return 2;
    }
    selected.push_back(n);
  }

  bool all_ok = true;
  for (const int n : selected) {
    const auto& [name, run] = checks[static_cast<size_t>(n - 1)];
    const auto start = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = run();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    printf("%s %d %s: %s [%.1fs]\n", r.ok ? "PASS" : "FAIL", n, name, r.detail.c_str(), elapsed);
    fflush(stdout);
    all_ok = all_ok && r.ok;
  }
  return all_ok ? 0 : 1;
}
