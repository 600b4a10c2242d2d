#include "hscd/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "hscd/common.hpp"

namespace hscd {

void EncoderConfig::validate() const {
  require(bands >= 1, "encoder bands must be positive");
  require(chunk >= 1, "band chunk size must be positive");
  require(chunk <= bands, "band chunk size cannot exceed the band count");
  require(token_dim >= 1, "token_dim must be positive");
  require(n_heads >= 1 && token_dim % n_heads == 0, "n_heads must divide token_dim");
  require(depth >= 1, "encoder depth must be positive");
  require(feature_dim >= 1, "feature_dim must be positive");
  require(proj_dim >= 1, "proj_dim must be positive");
  require(tau > 0.0, "temperature must be positive");
}

EncoderState init_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderState st;
  st.config = cfg;
  auto& ps = st.params;
  auto& net = st.net;
  const int64_t d = cfg.token_dim;
  const int64_t nc = cfg.n_chunks();
  net.chunk_proj.resize(static_cast<size_t>(nc));
  for (int64_t i = 0; i < nc; ++i) {
    const int64_t lo = i * cfg.chunk;
    const int64_t len = std::min(cfg.chunk, cfg.bands - lo);
    net.chunk_proj[static_cast<size_t>(i)].init(ps, "chunk" + std::to_string(i), len, d, rng);
  }
  Array pool({1, d});
  for (int64_t i = 0; i < d; ++i) pool[i] = 0.02 * rng.normal();
  net.pool = ps.add("pool", std::move(pool));
  net.blocks.resize(static_cast<size_t>(cfg.depth));
  for (int64_t i = 0; i < cfg.depth; ++i)
    net.blocks[static_cast<size_t>(i)].init(ps, "blk" + std::to_string(i), d, cfg.n_heads, rng);
  net.out_norm.init(ps, "out.norm", d);
  net.feat_head.init(ps, "feat", d, cfg.feature_dim, rng);
  net.proj_fc1.init(ps, "proj.fc1", cfg.feature_dim, cfg.feature_dim, rng);
  net.proj_fc2.init(ps, "proj.fc2", cfg.feature_dim, cfg.proj_dim, rng);
  return st;
}

EncodedVars encode_tape(nn::TapeCtx& ctx, const EncoderState& st, const Array& spectra) {
  const auto& cfg = st.config;
  require(spectra.ndim() == 2 && spectra.cols() == cfg.bands,
          "spectra must be (N, bands) with the configured band count");
  const int64_t n = spectra.rows();
  require(n >= 1, "encode batch must be nonempty");

  const int64_t nc = cfg.n_chunks();
  const ag::Var in = ag::constant(spectra);
  std::vector<ag::Var> parts;
  parts.reserve(static_cast<size_t>(nc) + 1);
  for (int64_t i = 0; i < nc; ++i) {
    const int64_t lo = i * cfg.chunk;
    const int64_t hi = std::min(cfg.bands, lo + cfg.chunk);
    parts.push_back(
        st.net.chunk_proj[static_cast<size_t>(i)].apply(ctx, ag::slice_cols(in, lo, hi)));
  }
  parts.push_back(ctx.use(st.net.pool));

  // Per-item sequences [chunk tokens..., pooling token]; the pooling row is
  // shared, so its gradient accumulates across items.
  const int64_t seq = cfg.seq_len();
  std::vector<int64_t> order;
  order.reserve(static_cast<size_t>(n * seq));
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t i = 0; i < nc; ++i) order.push_back(i * n + b);
    order.push_back(nc * n);
  }
  ag::Var x = ag::gather_rows(ag::concat_rows(parts), std::move(order));
  for (const auto& blk : st.net.blocks) x = blk.apply(ctx, x, n);
  x = st.net.out_norm.apply(ctx, x);

  std::vector<int64_t> pooled;
  pooled.reserve(static_cast<size_t>(n));
  for (int64_t b = 0; b < n; ++b) pooled.push_back(b * seq + nc);
  const ag::Var feat = st.net.feat_head.apply(ctx, ag::gather_rows(x, std::move(pooled)));
  const ag::Var proj =
      st.net.proj_fc2.apply(ctx, ag::gelu(st.net.proj_fc1.apply(ctx, feat)));
  return {feat, proj};
}

Encoded encode(const EncoderState& st, const Array& spectra) {
  nn::TapeCtx ctx(st.params, false);
  EncodedVars out = encode_tape(ctx, st, spectra);
  return {std::move(out.features->val), std::move(out.projections->val)};
}

ag::Var nt_xent_loss_var(const ag::Var& z1, const ag::Var& z2, double tau) {
  require(tau > 0.0, "temperature must be positive");
  require(z1->val.ndim() == 2 && z1->val.same_shape(z2->val),
          "projection batches must share shape (Q, D)");
  const int64_t q = z1->val.rows();
  require(q >= 2, "contrastive loss needs at least two pairs");
  const int64_t m = 2 * q;

  // Interleave to [a1, p1, a2, p2, ...] so Eq-style index pairs are adjacent.
  std::vector<int64_t> order(static_cast<size_t>(m));
  for (int64_t i = 0; i < q; ++i) {
    order[static_cast<size_t>(2 * i)] = i;
    order[static_cast<size_t>(2 * i + 1)] = q + i;
  }
  const ag::Var z = ag::gather_rows(ag::concat_rows({z1, z2}), std::move(order));

  for (int64_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < z->val.cols(); ++c) s += z->val.at(r, c) * z->val.at(r, c);
    require(s > 0.0, "zero-norm embedding has no cosine similarity");
  }

  const ag::Var zhat = ag::div_colvec(z, ag::sqrt_(ag::row_sumsq(z)));
  const ag::Var sims = ag::scale(ag::matmul_nt(zhat, zhat), 1.0 / tau);

  // Excluding k = i: the self column dies inside the softmax normalizer.
  Array mask({m, m});
  for (int64_t i = 0; i < m; ++i) mask[i * m + i] = 1e9;
  const ag::Var lsm = ag::log_softmax_rows(ag::sub(sims, ag::constant(std::move(mask))));

  std::vector<int64_t> rows(static_cast<size_t>(m)), cols(static_cast<size_t>(m));
  for (int64_t i = 0; i < q; ++i) {
    rows[static_cast<size_t>(2 * i)] = 2 * i;
    cols[static_cast<size_t>(2 * i)] = 2 * i + 1;
    rows[static_cast<size_t>(2 * i + 1)] = 2 * i + 1;
    cols[static_cast<size_t>(2 * i + 1)] = 2 * i;
  }
  const ag::Var picked = ag::gather_elems(lsm, std::move(rows), std::move(cols));
  return ag::scale(ag::sum(picked), -1.0 / static_cast<double>(m));
}

double nt_xent_loss(const Array& z1, const Array& z2, double tau) {
  return nt_xent_loss_var(ag::constant(z1), ag::constant(z2), tau)->val[0];
}

PairBatch build_pairs(const BitemporalScene& scene, const PseudoLabelMap& pseudo,
                      int64_t batch_size, Rng& rng) {
  require(pseudo.height == scene.height && pseudo.width == scene.width,
          "pseudo-label map does not match the scene extent");
  require(batch_size >= 2, "pair batch needs at least two pairs");

  std::vector<int64_t> unchanged;
  for (int64_t i = 0; i < scene.pixels(); ++i)
    if (pseudo.labels[static_cast<size_t>(i)] == 0) unchanged.push_back(i);
  require(static_cast<int64_t>(unchanged.size()) >= 2,
          "need at least two pixels pseudo-labeled unchanged");

  rng.shuffle(unchanged);
  const int64_t q = std::min<int64_t>(batch_size, static_cast<int64_t>(unchanged.size()));

  PairBatch batch;
  batch.anchors = Array({q, scene.bands});
  batch.positives = Array({q, scene.bands});
  batch.coords.reserve(static_cast<size_t>(q));
  for (int64_t i = 0; i < q; ++i) {
    const int64_t idx = unchanged[static_cast<size_t>(i)];
    const int64_t y = idx / scene.width;
    const int64_t x = idx % scene.width;
    batch.coords.emplace_back(y, x);
    for (int64_t c = 0; c < scene.bands; ++c) {
      batch.anchors.at(i, c) = static_cast<double>(scene.at(Phase::T1, c, y, x));
      batch.positives.at(i, c) = static_cast<double>(scene.at(Phase::T2, c, y, x));
    }
  }
  return batch;
}

}  // namespace hscd
