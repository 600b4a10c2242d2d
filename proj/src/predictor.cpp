#include "hscd/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "hscd/common.hpp"

namespace hscd {

namespace {

Array small_normal(std::vector<int64_t> shape, Rng& rng) {
  Array a(std::move(shape));
  for (int64_t i = 0; i < a.size(); ++i) a[i] = 0.02 * rng.normal();
  return a;
}

int64_t cond_row(Cond c) { return static_cast<int64_t>(c); }

}  // namespace

void PredictorConfig::validate() const {
  require(bands >= 1, "predictor bands must be positive");
  require(k >= 1 && k % 2 == 1, "predictor patch size must be odd");
  require(token_dim >= 2 && token_dim % 2 == 0, "token_dim must be even");
  require(n_heads >= 1 && token_dim % n_heads == 0, "n_heads must divide token_dim");
  require(depth >= 2 && depth % 2 == 0, "depth must be even");
  require(feature_dim >= 1, "feature_dim must be positive");
  require(!feature_timesteps.empty(), "feature_timesteps must be nonempty");
}

PredictorState init_predictor(const PredictorConfig& cfg, const NoiseSchedule& sched, Rng& rng) {
  cfg.validate();
  sched.validate();
  for (const int64_t t : cfg.feature_timesteps) sched.check_t(t);

  PredictorState st;
  st.config = cfg;
  st.schedule_steps = sched.steps;
  st.beta_start = sched.beta.front();
  st.beta_end = sched.beta.back();

  auto& ps = st.params;
  auto& net = st.net;
  const int64_t d = cfg.token_dim;
  net.spectral.init(ps, "embed.spectral", cfg.bands, d, rng);
  net.time_fc1.init(ps, "embed.time1", d, d, rng);
  net.time_fc2.init(ps, "embed.time2", d, d, rng);
  net.cond_table = ps.add("embed.cond", small_normal({3, d}, rng));
  net.pos = ps.add("embed.pos", small_normal({cfg.seq_len(), d}, rng));
  const int64_t half = cfg.depth / 2;
  net.shallow.resize(static_cast<size_t>(half));
  net.deep.resize(static_cast<size_t>(half));
  for (int64_t i = 0; i < half; ++i)
    net.shallow[static_cast<size_t>(i)].init(ps, "enc" + std::to_string(i), d, cfg.n_heads, rng);
  for (int64_t j = 0; j < half; ++j)
    net.deep[static_cast<size_t>(j)].init(ps, "dec" + std::to_string(j), d, cfg.n_heads, rng);
  net.out_norm.init(ps, "out.norm", d);
  net.out_proj.init(ps, "out.proj", d, cfg.bands, rng);
  net.feat_proj = ps.add("feat.proj", nn::glorot_uniform(3 * cfg.bands, cfg.feature_dim, rng));
  net.band_mean = ps.add("band.mean", Array::zeros({1, cfg.bands}));
  net.band_std = ps.add("band.std", Array::full({1, cfg.bands}, 1.0));
  return st;
}

void check_schedule(const PredictorState& st, const NoiseSchedule& sched) {
  const bool ok = sched.steps == st.schedule_steps &&
                  std::abs(sched.beta.front() - st.beta_start) <= 1e-15 &&
                  std::abs(sched.beta.back() - st.beta_end) <= 1e-15;
  require(ok, "noise schedule does not match the one the predictor was built with");
}

Array patch_to_rows(const float* patch, int64_t bands, int64_t k) {
  Array rows({k * k, bands});
  for (int64_t c = 0; c < bands; ++c)
    for (int64_t p = 0; p < k * k; ++p)
      rows[p * bands + c] = static_cast<double>(patch[c * k * k + p]);
  return rows;
}

Array patch_to_rows(const Array& patch_ckk) {
  require(patch_ckk.ndim() == 3, "patch must be (C, K, K)");
  const int64_t bands = patch_ckk.shape()[0];
  const int64_t k = patch_ckk.shape()[1];
  require(patch_ckk.shape()[2] == k, "patch window must be square");
  Array rows({k * k, bands});
  for (int64_t c = 0; c < bands; ++c)
    for (int64_t p = 0; p < k * k; ++p) rows[p * bands + c] = patch_ckk[c * k * k + p];
  return rows;
}

Array rows_to_patch(const Array& rows, int64_t channels, int64_t k) {
  require(rows.ndim() == 2 && rows.rows() == k * k && rows.cols() == channels,
          "token rows must be (K*K, channels)");
  Array out({channels, k, k});
  for (int64_t c = 0; c < channels; ++c)
    for (int64_t p = 0; p < k * k; ++p) out[c * k * k + p] = rows[p * channels + c];
  return out;
}

void standardize_rows(const PredictorState& st, Array& rows) {
  const Array& mean = st.params.entry(st.net.band_mean).value;
  const Array& sd = st.params.entry(st.net.band_std).value;
  const int64_t c = st.config.bands;
  require(rows.ndim() == 2 && rows.cols() == c, "rows do not match predictor band count");
  for (int64_t i = 0; i < c; ++i) require(sd[i] > 0.0, "band standard deviation must be positive");
  for (int64_t r = 0; r < rows.rows(); ++r)
    for (int64_t i = 0; i < c; ++i) rows[r * c + i] = (rows[r * c + i] - mean[i]) / sd[i];
}

void unstandardize_rows(const PredictorState& st, Array& rows) {
  const Array& mean = st.params.entry(st.net.band_mean).value;
  const Array& sd = st.params.entry(st.net.band_std).value;
  const int64_t c = st.config.bands;
  require(rows.ndim() == 2 && rows.cols() == c, "rows do not match predictor band count");
  for (int64_t r = 0; r < rows.rows(); ++r)
    for (int64_t i = 0; i < c; ++i) rows[r * c + i] = rows[r * c + i] * sd[i] + mean[i];
}

ag::Var predict_tape(nn::TapeCtx& ctx, const PredictorState& st, const Array& xt_rows,
                     const std::vector<int64_t>& ts, const std::vector<Cond>& conds) {
  const auto& cfg = st.config;
  const int64_t n = static_cast<int64_t>(ts.size());
  require(n >= 1, "prediction batch must be nonempty");
  require(static_cast<int64_t>(conds.size()) == n, "one condition per item required");
  const int64_t kk = cfg.k * cfg.k;
  require(xt_rows.ndim() == 2 && xt_rows.rows() == n * kk && xt_rows.cols() == cfg.bands,
          "noisy input must be (items*K*K, bands)");
  for (const int64_t t : ts)
    require(t >= 0 && t < st.schedule_steps, "timestep outside the trained schedule");

  const int64_t d = cfg.token_dim;
  ag::Var spec = st.net.spectral.apply(ctx, ag::constant(xt_rows));

  Array temb({n, d});
  for (int64_t i = 0; i < n; ++i) {
    const Array e = nn::timestep_embedding(ts[static_cast<size_t>(i)], d);
    std::copy(e.vec().begin(), e.vec().end(), temb.vec().begin() + i * d);
  }
  ag::Var time = st.net.time_fc2.apply(
      ctx, ag::gelu(st.net.time_fc1.apply(ctx, ag::constant(std::move(temb)))));

  std::vector<int64_t> cidx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    cidx[static_cast<size_t>(i)] = cond_row(conds[static_cast<size_t>(i)]);
  ag::Var cond = ag::gather_rows(ctx.use(st.net.cond_table), std::move(cidx));

  // Interleave the three token groups into per-item sequences
  // [pixel tokens..., time token, condition token].
  const int64_t seq = cfg.seq_len();
  std::vector<int64_t> order;
  order.reserve(static_cast<size_t>(n * seq));
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t p = 0; p < kk; ++p) order.push_back(b * kk + p);
    order.push_back(n * kk + b);
    order.push_back(n * kk + n + b);
  }
  ag::Var x = ag::gather_rows(ag::concat_rows({spec, time, cond}), std::move(order));
  x = ag::add_tiled(x, ctx.use(st.net.pos), n);

  const int64_t half = cfg.depth / 2;
  std::vector<ag::Var> shallow_out;
  shallow_out.reserve(static_cast<size_t>(half));
  for (int64_t i = 0; i < half; ++i) {
    x = st.net.shallow[static_cast<size_t>(i)].apply(ctx, x, n);
    shallow_out.push_back(x);
  }
  for (int64_t j = 0; j < half; ++j) {
    const ag::Var& kv = shallow_out[static_cast<size_t>(half - 1 - j)];
    x = st.net.deep[static_cast<size_t>(j)].apply(ctx, x, kv, n);
  }

  x = st.net.out_norm.apply(ctx, x);
  std::vector<int64_t> spatial;
  spatial.reserve(static_cast<size_t>(n * kk));
  for (int64_t b = 0; b < n; ++b)
    for (int64_t p = 0; p < kk; ++p) spatial.push_back(b * seq + p);
  return st.net.out_proj.apply(ctx, ag::gather_rows(x, std::move(spatial)));
}

Array predict_noise_rows(const PredictorState& st, const Array& xt_rows,
                         const std::vector<int64_t>& ts, const std::vector<Cond>& conds) {
  nn::TapeCtx ctx(st.params, false);
  ag::Var out = predict_tape(ctx, st, xt_rows, ts, conds);
  return std::move(out->val);
}

Array predict_noise(const PredictorState& st, const Array& xt_ckk, int64_t t, Cond cond) {
  const auto& cfg = st.config;
  require(xt_ckk.ndim() == 3 && xt_ckk.shape()[0] == cfg.bands && xt_ckk.shape()[1] == cfg.k &&
              xt_ckk.shape()[2] == cfg.k,
          "patch shape does not match predictor config");
  const Array rows = patch_to_rows(xt_ckk);
  const Array out = predict_noise_rows(st, rows, {t}, {cond});
  return rows_to_patch(out, cfg.bands, cfg.k);
}

Array extract_features_with(const PredictorState& st, const Array& x0_ckk, Cond cond,
                            const NoiseSchedule& sched, Rng& rng, const PatchPredictFn& predict) {
  check_schedule(st, sched);
  const auto& cfg = st.config;
  require(x0_ckk.ndim() == 3 && x0_ckk.shape()[0] == cfg.bands && x0_ckk.shape()[1] == cfg.k &&
              x0_ckk.shape()[2] == cfg.k,
          "patch shape does not match predictor config");

  Array rows = patch_to_rows(x0_ckk);
  standardize_rows(st, rows);
  const int64_t kk = cfg.k * cfg.k;
  const int64_t c = cfg.bands;
  const int64_t nt = static_cast<int64_t>(cfg.feature_timesteps.size());

  Array stacked({kk, nt * c});
  for (int64_t ti = 0; ti < nt; ++ti) {
    const int64_t t = cfg.feature_timesteps[static_cast<size_t>(ti)];
    Array eps({kk, c});
    for (int64_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
    const Array xt = forward_diffuse(rows, t, eps, sched);
    const Array eps_hat = predict(xt, t, cond);
    require(eps_hat.same_shape(xt), "noise prediction shape mismatch");
    const Array x0_hat = estimate_x0(xt, t, eps_hat, sched);
    for (int64_t p = 0; p < kk; ++p)
      for (int64_t i = 0; i < c; ++i) stacked[p * nt * c + ti * c + i] = x0_hat[p * c + i];
  }
  const Array& proj = st.params.entry(st.net.feat_proj).value;
  return rows_to_patch(matmul(stacked, proj), cfg.feature_dim, cfg.k);
}

Array extract_features(const PredictorState& st, const Array& x0_ckk, Cond cond,
                       const NoiseSchedule& sched, Rng& rng) {
  return extract_features_with(st, x0_ckk, cond, sched, rng,
                               [&st](const Array& xt, int64_t t, Cond c) {
                                 return predict_noise_rows(st, xt, {t}, {c});
                               });
}

Array extract_features_rows(const PredictorState& st, const Array& x0_rows,
                            std::vector<Rng>& item_rngs, Cond cond, const NoiseSchedule& sched) {
  check_schedule(st, sched);
  const auto& cfg = st.config;
  const int64_t n = static_cast<int64_t>(item_rngs.size());
  require(n >= 1, "feature batch must be nonempty");
  const int64_t kk = cfg.k * cfg.k;
  const int64_t c = cfg.bands;
  require(x0_rows.ndim() == 2 && x0_rows.rows() == n * kk && x0_rows.cols() == c,
          "patch rows must be (items*K*K, bands)");

  Array rows = x0_rows;
  standardize_rows(st, rows);
  const int64_t nt = static_cast<int64_t>(cfg.feature_timesteps.size());
  const std::vector<Cond> conds(static_cast<size_t>(n), cond);

  Array stacked({n * kk, nt * c});
  for (int64_t ti = 0; ti < nt; ++ti) {
    const int64_t t = cfg.feature_timesteps[static_cast<size_t>(ti)];
    Array eps({n * kk, c});
    for (int64_t b = 0; b < n; ++b) {
      Rng& r = item_rngs[static_cast<size_t>(b)];
      for (int64_t i = 0; i < kk * c; ++i) eps[b * kk * c + i] = r.normal();
    }
    const Array xt = forward_diffuse(rows, t, eps, sched);
    const std::vector<int64_t> ts(static_cast<size_t>(n), t);
    const Array eps_hat = predict_noise_rows(st, xt, ts, conds);
    const Array x0_hat = estimate_x0(xt, t, eps_hat, sched);
    for (int64_t p = 0; p < n * kk; ++p)
      for (int64_t i = 0; i < c; ++i) stacked[p * nt * c + ti * c + i] = x0_hat[p * c + i];
  }
  const Array& proj = st.params.entry(st.net.feat_proj).value;
  return matmul(stacked, proj);
}

namespace {

struct PixelRef {
  size_t scene;
  Phase phase;
  int64_t y, x;
};

PixelRef draw_pixel(const std::vector<BitemporalScene>& scenes, Rng& rng) {
  int64_t total = 0;
  for (const auto& s : scenes) total += 2 * s.pixels();
  int64_t r = rng.uniform_int(0, total - 1);
  for (size_t si = 0; si < scenes.size(); ++si) {
    const auto& s = scenes[si];
    if (r < 2 * s.pixels()) {
      const Phase phase = r < s.pixels() ? Phase::T1 : Phase::T2;
      const int64_t i = r % s.pixels();
      return {si, phase, i / s.width, i % s.width};
    }
    r -= 2 * s.pixels();
  }
  throw InvariantError("pixel draw walked past the scene list");
}

// Draws n training items: standardized noisy rows, the matching noise draws,
// and per-item timesteps/conditions, consuming rng in a fixed order.
void build_noise_batch(const PredictorState& st, const std::vector<BitemporalScene>& scenes,
                       const NoiseSchedule& sched, int64_t n, Rng& rng, Array& xt, Array& eps,
                       std::vector<int64_t>& ts, std::vector<Cond>& conds) {
  const auto& cfg = st.config;
  const int64_t kk = cfg.k * cfg.k;
  const int64_t c = cfg.bands;
  xt = Array({n * kk, c});
  eps = Array({n * kk, c});
  ts.assign(static_cast<size_t>(n), 0);
  conds.assign(static_cast<size_t>(n), Cond::T1);
  for (int64_t b = 0; b < n; ++b) {
    const PixelRef px = draw_pixel(scenes, rng);
    const PatchBatch pb = extract_patches(scenes[px.scene], px.phase, {{px.y, px.x}}, cfg.k);
    Array rows = patch_to_rows(pb.patch(0), c, cfg.k);
    standardize_rows(st, rows);
    const int64_t t = rng.uniform_int(0, sched.steps - 1);
    ts[static_cast<size_t>(b)] = t;
    conds[static_cast<size_t>(b)] = to_cond(px.phase);
    Array e({kk, c});
    for (int64_t i = 0; i < e.size(); ++i) e[i] = rng.normal();
    const Array noisy = forward_diffuse(rows, t, e, sched);
    std::copy(noisy.vec().begin(), noisy.vec().end(), xt.vec().begin() + b * kk * c);
    std::copy(e.vec().begin(), e.vec().end(), eps.vec().begin() + b * kk * c);
  }
}

void set_band_stats(PredictorState& st, const std::vector<BitemporalScene>& scenes) {
  const int64_t c = st.config.bands;
  std::vector<double> sum(static_cast<size_t>(c), 0.0);
  std::vector<double> sumsq(static_cast<size_t>(c), 0.0);
  int64_t count = 0;
  for (const auto& s : scenes) {
    const int64_t px = s.pixels();
    for (int64_t b = 0; b < c; ++b) {
      for (int64_t i = 0; i < px; ++i) {
        const double v1 = static_cast<double>(s.t1[static_cast<size_t>(b * px + i)]);
        const double v2 = static_cast<double>(s.t2[static_cast<size_t>(b * px + i)]);
        sum[static_cast<size_t>(b)] += v1 + v2;
        sumsq[static_cast<size_t>(b)] += v1 * v1 + v2 * v2;
      }
    }
    count += 2 * px;
  }
  Array& mean = st.params.entry(st.net.band_mean).value;
  Array& sd = st.params.entry(st.net.band_std).value;
  for (int64_t b = 0; b < c; ++b) {
    const double m = sum[static_cast<size_t>(b)] / static_cast<double>(count);
    const double var =
        std::max(0.0, sumsq[static_cast<size_t>(b)] / static_cast<double>(count) - m * m);
    mean[b] = m;
    sd[b] = std::max(std::sqrt(var), 1e-8);
  }
}

}  // namespace

PretrainResult pretrain(const std::vector<BitemporalScene>& scenes, const PredictorConfig& cfg,
                        const NoiseSchedule& sched, const PretrainConfig& opt, Rng& rng) {
  require(!scenes.empty(), "pretrain requires at least one scene");
  for (const auto& s : scenes)
    require(s.bands == cfg.bands, "scene band count does not match predictor config");
  require(opt.epochs >= 1, "epochs must be positive");
  require(opt.patches_per_epoch >= 1, "patches_per_epoch must be positive");
  require(opt.batch_size >= 1, "batch_size must be positive");
  require(opt.lr > 0.0, "learning rate must be positive");
  require(opt.weight_decay >= 0.0, "weight decay must be nonnegative");

  PredictorState st = init_predictor(cfg, sched, rng);
  set_band_stats(st, scenes);
  return pretrain_from(std::move(st), scenes, sched, opt, rng);
}

PretrainResult pretrain_from(PredictorState state, const std::vector<BitemporalScene>& scenes,
                             const NoiseSchedule& sched, const PretrainConfig& opt, Rng& rng) {
  require(!scenes.empty(), "pretrain requires at least one scene");
  for (const auto& s : scenes)
    require(s.bands == state.config.bands, "scene band count does not match predictor config");
  require(opt.epochs >= 1, "epochs must be positive");
  require(opt.patches_per_epoch >= 1, "patches_per_epoch must be positive");
  require(opt.batch_size >= 1, "batch_size must be positive");
  require(opt.lr > 0.0, "learning rate must be positive");
  require(opt.weight_decay >= 0.0, "weight decay must be nonnegative");
  check_schedule(state, sched);

  PretrainResult res{std::move(state), {}};
  PredictorState& st = res.state;
  nn::AdamW optimizer(opt.lr, 0.9, 0.999, 1e-8, opt.weight_decay);
  Array xt, eps;
  std::vector<int64_t> ts;
  std::vector<Cond> conds;
  for (int64_t epoch = 0; epoch < opt.epochs; ++epoch) {
    double acc = 0.0;
    for (int64_t done = 0; done < opt.patches_per_epoch;) {
      const int64_t n = std::min(opt.batch_size, opt.patches_per_epoch - done);
      build_noise_batch(st, scenes, sched, n, rng, xt, eps, ts, conds);
      nn::TapeCtx ctx(st.params, true);
      const ag::Var pred = predict_tape(ctx, st, xt, ts, conds);
      const ag::Var loss = noise_loss_var(pred, eps, n);
      ag::backward(loss);
      optimizer.step(st.params, ctx);
      acc += loss->val[0] * static_cast<double>(n);
      done += n;
    }
    res.epoch_loss.push_back(acc / static_cast<double>(opt.patches_per_epoch));
  }
  return res;
}

double validation_loss(const PredictorState& st, const std::vector<BitemporalScene>& scenes,
                       const NoiseSchedule& sched, int64_t n_patches, Rng& rng) {
  require(!scenes.empty(), "validation requires at least one scene");
  require(n_patches >= 1, "n_patches must be positive");
  check_schedule(st, sched);
  Array xt, eps;
  std::vector<int64_t> ts;
  std::vector<Cond> conds;
  double acc = 0.0;
  for (int64_t done = 0; done < n_patches;) {
    const int64_t n = std::min<int64_t>(128, n_patches - done);
    build_noise_batch(st, scenes, sched, n, rng, xt, eps, ts, conds);
    const Array pred = predict_noise_rows(st, xt, ts, conds);
    for (int64_t i = 0; i < pred.size(); ++i) {
      const double d = pred[i] - eps[i];
      acc += d * d;
    }
    done += n;
  }
  return acc / static_cast<double>(n_patches);
}

}  // namespace hscd
