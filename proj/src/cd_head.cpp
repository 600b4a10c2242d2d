#include "hscd/cd_head.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "hscd/common.hpp"
#include "hscd/diffusion.hpp"

namespace hscd {

void HeadConfig::validate() const {
  require(feature_dim >= 1, "feature_dim must be positive");
  require(k >= 1 && k % 2 == 1, "head patch size must be odd");
  require(depth >= 1, "head depth must be positive");
  require(n_heads >= 1 && fused_dim() % n_heads == 0, "n_heads must divide the fused width");
}

HeadState init_head(const HeadConfig& cfg, Rng& rng) {
  cfg.validate();
  HeadState st;
  st.config = cfg;
  auto& ps = st.params;
  auto& net = st.net;
  const int64_t w = cfg.fused_dim();
  net.diff_conv.init(ps, "diff", cfg.feature_dim, w, rng);
  Array pos({cfg.k * cfg.k, w});
  for (int64_t i = 0; i < pos.size(); ++i) pos[i] = 0.02 * rng.normal();
  net.pos = ps.add("pos", std::move(pos));
  net.blocks.resize(static_cast<size_t>(cfg.depth));
  for (int64_t i = 0; i < cfg.depth; ++i)
    net.blocks[static_cast<size_t>(i)].init(ps, "blk" + std::to_string(i), w, cfg.n_heads, rng);
  net.out_norm.init(ps, "out.norm", w);
  net.cls.init(ps, "cls", w, 2, rng);
  return st;
}

ag::Var fuse_tape(nn::TapeCtx& ctx, const HeadState& st, const ag::Var& ctcl1,
                  const ag::Var& ctcl2, const ag::Var& scdm1, const ag::Var& scdm2) {
  const Array& c1 = ctcl1->val;
  require(c1.ndim() == 2 && c1.cols() == st.config.feature_dim,
          "fusion inputs must be (M, feature_dim) rows");
  require(c1.same_shape(ctcl2->val) && c1.same_shape(scdm1->val) && c1.same_shape(scdm2->val),
          "all four fusion inputs must share shape");
  const ag::Var diff = st.net.diff_conv.apply(ctx, ag::sub(ctcl1, ctcl2));
  const ag::Var enc_cat = ag::concat_cols(ctcl1, ctcl2);
  const ag::Var den_cat = ag::concat_cols(scdm1, scdm2);
  return ag::scale(ag::add(ag::add(diff, enc_cat), den_cat), 1.0 / 3.0);
}

ag::Var classify_tape(nn::TapeCtx& ctx, const HeadState& st, const ag::Var& fused_rows,
                      int64_t items) {
  const auto& cfg = st.config;
  const int64_t kk = cfg.k * cfg.k;
  require(items >= 1, "classification batch must be nonempty");
  require(fused_rows->val.ndim() == 2 && fused_rows->val.rows() == items * kk &&
              fused_rows->val.cols() == cfg.fused_dim(),
          "fused rows must be (items*K*K, 2*feature_dim)");
  ag::Var x = ag::add_tiled(fused_rows, ctx.use(st.net.pos), items);
  for (const auto& blk : st.net.blocks) x = blk.apply(ctx, x, items);
  x = st.net.out_norm.apply(ctx, x);
  std::vector<int64_t> centers;
  centers.reserve(static_cast<size_t>(items));
  for (int64_t b = 0; b < items; ++b) centers.push_back(b * kk + (kk - 1) / 2);
  return st.net.cls.apply(ctx, ag::gather_rows(x, std::move(centers)));
}

Array fuse(const Array& ctcl1, const Array& ctcl2, const Array& scdm1, const Array& scdm2,
           const HeadState& st) {
  const int64_t d = st.config.feature_dim;
  const int64_t k = st.config.k;
  require(ctcl1.ndim() == 3 && ctcl1.shape()[0] == d && ctcl1.shape()[1] == k &&
              ctcl1.shape()[2] == k,
          "fusion maps must be (feature_dim, K, K)");
  nn::TapeCtx ctx(st.params, false);
  ag::Var out = fuse_tape(ctx, st, ag::constant(patch_to_rows(ctcl1)),
                          ag::constant(patch_to_rows(ctcl2)), ag::constant(patch_to_rows(scdm1)),
                          ag::constant(patch_to_rows(scdm2)));
  return rows_to_patch(out->val, 2 * d, k);
}

Array classify(const HeadState& st, const Array& fused_2dkk) {
  const auto& cfg = st.config;
  require(fused_2dkk.ndim() == 3 && fused_2dkk.shape()[0] == cfg.fused_dim() &&
              fused_2dkk.shape()[1] == cfg.k && fused_2dkk.shape()[2] == cfg.k,
          "fused map must be (2*feature_dim, K, K)");
  nn::TapeCtx ctx(st.params, false);
  ag::Var logits = classify_tape(ctx, st, ag::constant(patch_to_rows(fused_2dkk)), 1);
  Array out({2});
  out[0] = logits->val[0];
  out[1] = logits->val[1];
  return out;
}

ag::Var change_loss_var(const ag::Var& logits, const std::vector<uint8_t>& labels) {
  const int64_t n = logits->val.rows();
  require(n >= 1, "change loss needs a nonempty batch");
  require(logits->val.ndim() == 2 && logits->val.cols() == 2, "logits must be (N, 2)");
  require(static_cast<int64_t>(labels.size()) == n, "one label per logit row required");
  Array y({n, 1}), ynot({n, 1});
  for (int64_t i = 0; i < n; ++i) {
    require(labels[static_cast<size_t>(i)] <= 1, "labels must be 0 or 1");
    y[i] = static_cast<double>(labels[static_cast<size_t>(i)]);
    ynot[i] = 1.0 - y[i];
  }
  const ag::Var p =
      ag::clamp(ag::slice_cols(ag::softmax_rows(logits), 1, 2), 1e-7, 1.0 - 1e-7);
  const ag::Var term = ag::add(ag::mul(ag::constant(std::move(y)), ag::log_(p)),
                               ag::mul(ag::constant(std::move(ynot)),
                                       ag::log_(ag::add_scalar(ag::neg(p), 1.0))));
  return ag::scale(ag::sum(term), -1.0 / static_cast<double>(n));
}

double change_loss(const Array& logits, const std::vector<uint8_t>& labels) {
  return change_loss_var(ag::constant(logits), labels)->val[0];
}

double total_loss(double change, double con, double lambda_con) {
  require(lambda_con >= 0.0, "contrastive weight must be nonnegative");
  return change + lambda_con * con;
}

ag::Var total_loss_var(const ag::Var& change, const ag::Var& con, double lambda_con) {
  require(lambda_con >= 0.0, "contrastive weight must be nonnegative");
  return ag::add(change, ag::scale(con, lambda_con));
}

void Stage2Config::validate() const {
  encoder.validate();
  head.validate();
  require(encoder.feature_dim == head.feature_dim,
          "encoder and head must agree on feature_dim");
  require(epochs >= 1, "epochs must be positive");
  require(batch_size >= 1, "batch_size must be positive");
  require(contrastive_pairs >= 2, "contrastive_pairs must be at least two");
  require(lr0 > 0.0, "initial learning rate must be positive");
  require(lambda_con >= 0.0, "contrastive weight must be nonnegative");
}

namespace {

int64_t reflect(int64_t i, int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

// Raw token rows for all listed centers of one phase, (n*K*K, bands).
Array stacked_patch_rows(const BitemporalScene& scene, Phase phase,
                         const std::vector<std::pair<int64_t, int64_t>>& centers, int64_t k) {
  const PatchBatch pb = extract_patches(scene, phase, centers, k);
  const int64_t kk = k * k;
  Array rows({pb.count * kk, scene.bands});
  for (int64_t i = 0; i < pb.count; ++i) {
    const Array one = patch_to_rows(pb.patch(i), scene.bands, k);
    std::copy(one.vec().begin(), one.vec().end(),
              rows.vec().begin() + i * kk * scene.bands);
  }
  return rows;
}

Array scdm_feature_rows(const PredictorState& predictor, const NoiseSchedule& sched,
                        const Array& raw_rows, Phase phase,
                        const std::vector<std::pair<int64_t, int64_t>>& centers,
                        uint64_t feature_seed) {
  std::vector<Rng> rngs;
  rngs.reserve(centers.size());
  for (const auto& [y, x] : centers)
    rngs.push_back(substream_rng(feature_seed, "scdm.feat",
                                 {static_cast<uint64_t>(phase), static_cast<uint64_t>(y),
                                  static_cast<uint64_t>(x)}));
  return extract_features_rows(predictor, raw_rows, rngs, to_cond(phase), sched);
}

void check_model_dims(const BitemporalScene& scene, const PredictorState& predictor,
                      const EncoderConfig& enc, const HeadConfig& head) {
  require(scene.bands == predictor.config.bands, "scene bands do not match the denoiser");
  require(enc.bands == scene.bands, "scene bands do not match the encoder");
  require(predictor.config.k == head.k, "denoiser and head disagree on patch size");
  require(predictor.config.feature_dim == head.feature_dim,
          "denoiser and head disagree on feature_dim");
}

}  // namespace

Stage2Result train_stage2(const BitemporalScene& scene, const PredictorState& predictor,
                          const NoiseSchedule& sched, const TrainingPixels& pixels,
                          const Stage2Config& cfg, Rng& rng) {
  cfg.validate();
  check_schedule(predictor, sched);
  check_model_dims(scene, predictor, cfg.encoder, cfg.head);
  const int64_t n_px = static_cast<int64_t>(pixels.coords.size());
  require(n_px >= 1, "training pixel set is empty");
  require(pixels.labels.size() == pixels.coords.size(), "one label per training pixel required");
  bool any0 = false, any1 = false;
  for (const uint8_t v : pixels.labels) (v == 0 ? any0 : any1) = true;
  require(any0 && any1, "training pixels must contain both classes");

  const std::vector<double> frozen = predictor.params.flatten();
  const int64_t k = cfg.head.k;
  const int64_t kk = k * k;
  const int64_t c = scene.bands;
  const int64_t d = cfg.head.feature_dim;

  // Fixed per-run inputs: standardized spectra for the encoder and denoiser
  // features (or zero maps) per phase.
  Array rows1 = stacked_patch_rows(scene, Phase::T1, pixels.coords, k);
  Array rows2 = stacked_patch_rows(scene, Phase::T2, pixels.coords, k);
  Array scdm1 = Array::zeros({n_px * kk, d});
  Array scdm2 = Array::zeros({n_px * kk, d});
  if (cfg.head.use_scdm) {
    scdm1 = scdm_feature_rows(predictor, sched, rows1, Phase::T1, pixels.coords,
                              cfg.feature_seed);
    scdm2 = scdm_feature_rows(predictor, sched, rows2, Phase::T2, pixels.coords,
                              cfg.feature_seed);
  }
  standardize_rows(predictor, rows1);
  standardize_rows(predictor, rows2);

  std::vector<int64_t> unchanged;
  for (int64_t i = 0; i < n_px; ++i)
    if (pixels.labels[static_cast<size_t>(i)] == 0) unchanged.push_back(i);
  if (cfg.lambda_con > 0.0)
    require(static_cast<int64_t>(unchanged.size()) >= 2,
            "contrastive term needs at least two unchanged training pixels");

  Stage2Result res{init_encoder(cfg.encoder, rng), init_head(cfg.head, rng), {}};
  nn::Adadelta opt_enc(cfg.lr0);
  nn::Adadelta opt_head(cfg.lr0);

  std::vector<int64_t> order(static_cast<size_t>(n_px));
  for (int64_t i = 0; i < n_px; ++i) order[static_cast<size_t>(i)] = i;

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr0 * (1.0 - static_cast<double>(epoch) / static_cast<double>(cfg.epochs));
    opt_enc.set_lr(lr);
    opt_head.set_lr(lr);
    rng.shuffle(order);
    double acc = 0.0;
    for (int64_t start = 0; start < n_px; start += cfg.batch_size) {
      const int64_t n = std::min(cfg.batch_size, n_px - start);
      Array b1({n * kk, c}), b2({n * kk, c});
      Array s1({n * kk, d}), s2({n * kk, d});
      std::vector<uint8_t> labels(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) {
        const int64_t px = order[static_cast<size_t>(start + i)];
        std::copy_n(rows1.vec().begin() + px * kk * c, kk * c, b1.vec().begin() + i * kk * c);
        std::copy_n(rows2.vec().begin() + px * kk * c, kk * c, b2.vec().begin() + i * kk * c);
        std::copy_n(scdm1.vec().begin() + px * kk * d, kk * d, s1.vec().begin() + i * kk * d);
        std::copy_n(scdm2.vec().begin() + px * kk * d, kk * d, s2.vec().begin() + i * kk * d);
        labels[static_cast<size_t>(i)] = pixels.labels[static_cast<size_t>(px)];
      }

      nn::TapeCtx ectx(res.encoder.params, true);
      nn::TapeCtx hctx(res.head.params, true);
      const EncodedVars f1 = encode_tape(ectx, res.encoder, b1);
      const EncodedVars f2 = encode_tape(ectx, res.encoder, b2);
      const ag::Var fused = fuse_tape(hctx, res.head, f1.features, f2.features,
                                      ag::constant(std::move(s1)), ag::constant(std::move(s2)));
      const ag::Var logits = classify_tape(hctx, res.head, fused, n);
      ag::Var loss = change_loss_var(logits, labels);

      if (cfg.lambda_con > 0.0) {
        std::vector<int64_t> pool = unchanged;
        rng.shuffle(pool);
        const int64_t q =
            std::min<int64_t>(cfg.contrastive_pairs, static_cast<int64_t>(pool.size()));
        Array a1({q, c}), a2({q, c});
        for (int64_t i = 0; i < q; ++i) {
          const int64_t px = pool[static_cast<size_t>(i)];
          const int64_t center = px * kk + (kk - 1) / 2;
          std::copy_n(rows1.vec().begin() + center * c, c, a1.vec().begin() + i * c);
          std::copy_n(rows2.vec().begin() + center * c, c, a2.vec().begin() + i * c);
        }
        const EncodedVars p1 = encode_tape(ectx, res.encoder, a1);
        const EncodedVars p2 = encode_tape(ectx, res.encoder, a2);
        const ag::Var lcon = nt_xent_loss_var(p1.projections, p2.projections, cfg.encoder.tau);
        loss = total_loss_var(loss, lcon, cfg.lambda_con);
      }

      ag::backward(loss);
      opt_enc.step(res.encoder.params, ectx);
      opt_head.step(res.head.params, hctx);
      acc += loss->val[0] * static_cast<double>(n);
    }
    res.epoch_loss.push_back(acc / static_cast<double>(n_px));
  }

  require(predictor.params.flatten() == frozen,
          "denoiser parameters changed during stage-2 training");
  return res;
}

ChangeMap infer_map(const BitemporalScene& scene, const PredictorState& predictor,
                    const NoiseSchedule& sched, const EncoderState& encoder,
                    const HeadState& head, const InferConfig& cfg) {
  check_schedule(predictor, sched);
  check_model_dims(scene, predictor, encoder.config, head.config);
  require(encoder.config.feature_dim == head.config.feature_dim,
          "encoder and head disagree on feature_dim");
  require(cfg.batch_pixels >= 1, "batch_pixels must be positive");

  const int64_t h = scene.height;
  const int64_t w = scene.width;
  const int64_t k = head.config.k;
  const int64_t kk = k * k;
  const int64_t c = scene.bands;
  const int64_t d = head.config.feature_dim;
  const int64_t half = k / 2;

  // Encoder features are per-pixel pure, so each scene pixel is encoded once
  // and patch maps are gathered through the mirror padding.
  Array feat1, feat2;
  for (const Phase phase : {Phase::T1, Phase::T2}) {
    Array spectra({h * w, c});
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t b = 0; b < c; ++b)
          spectra.at(y * w + x, b) = static_cast<double>(scene.at(phase, b, y, x));
    standardize_rows(predictor, spectra);
    (phase == Phase::T1 ? feat1 : feat2) = encode(encoder, spectra).features;
  }

  ChangeMap map;
  map.scene_name = scene.name;
  map.height = h;
  map.width = w;
  map.decisions.assign(static_cast<size_t>(h * w), 0);

  std::vector<std::pair<int64_t, int64_t>> centers;
  centers.reserve(static_cast<size_t>(cfg.batch_pixels));
  for (int64_t base = 0; base < h * w; base += cfg.batch_pixels) {
    const int64_t n = std::min(cfg.batch_pixels, h * w - base);
    centers.clear();
    for (int64_t i = 0; i < n; ++i)
      centers.emplace_back((base + i) / w, (base + i) % w);

    Array s1({n * kk, d}), s2({n * kk, d});
    if (head.config.use_scdm) {
      const Array raw1 = stacked_patch_rows(scene, Phase::T1, centers, k);
      const Array raw2 = stacked_patch_rows(scene, Phase::T2, centers, k);
      s1 = scdm_feature_rows(predictor, sched, raw1, Phase::T1, centers, cfg.feature_seed);
      s2 = scdm_feature_rows(predictor, sched, raw2, Phase::T2, centers, cfg.feature_seed);
    }

    Array c1({n * kk, d}), c2({n * kk, d});
    for (int64_t i = 0; i < n; ++i) {
      const auto [cy, cx] = centers[static_cast<size_t>(i)];
      for (int64_t dy = -half; dy <= half; ++dy)
        for (int64_t dx = -half; dx <= half; ++dx) {
          const int64_t src = reflect(cy + dy, h) * w + reflect(cx + dx, w);
          const int64_t dst = i * kk + (dy + half) * k + (dx + half);
          std::copy_n(feat1.vec().begin() + src * d, d, c1.vec().begin() + dst * d);
          std::copy_n(feat2.vec().begin() + src * d, d, c2.vec().begin() + dst * d);
        }
    }

    nn::TapeCtx hctx(head.params, false);
    const ag::Var fused =
        fuse_tape(hctx, head, ag::constant(std::move(c1)), ag::constant(std::move(c2)),
                  ag::constant(std::move(s1)), ag::constant(std::move(s2)));
    const ag::Var logits = classify_tape(hctx, head, fused, n);
    for (int64_t i = 0; i < n; ++i)
      map.decisions[static_cast<size_t>(base + i)] =
          logits->val.at(i, 1) > logits->val.at(i, 0) ? 1 : 0;
  }
  return map;
}

}  // namespace hscd
