#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hscd/array.hpp"
#include "hscd/nn.hpp"
#include "hscd/pseudo_label.hpp"
#include "hscd/rng.hpp"
#include "hscd/scene.hpp"

namespace hscd {

// Spectral transformer encoder: contiguous band chunks become tokens (one
// projection per chunk position, so a trailing short chunk needs no padding),
// a learned pooling token is appended, and the pooled output feeds a feature
// head plus a two-layer projection MLP for the contrastive objective.
struct EncoderConfig {
  int64_t bands = 0;
  int64_t chunk = 4;
  int64_t token_dim = 32;
  int n_heads = 4;
  int64_t depth = 2;
  int64_t feature_dim = 32;
  int64_t proj_dim = 16;
  double tau = 0.5;

  int64_t n_chunks() const { return (bands + chunk - 1) / chunk; }
  int64_t seq_len() const { return n_chunks() + 1; }
  void validate() const;
};

struct EncoderNet {
  std::vector<nn::Linear> chunk_proj;
  int64_t pool = -1;  // (1, token_dim)
  std::vector<nn::TransformerBlock> blocks;
  nn::LayerNorm out_norm;
  nn::Linear feat_head;
  nn::Linear proj_fc1, proj_fc2;
};

struct EncoderState {
  EncoderConfig config;
  nn::ParamStore params;
  EncoderNet net;
};

EncoderState init_encoder(const EncoderConfig& cfg, Rng& rng);

struct EncodedVars {
  ag::Var features;     // (N, feature_dim)
  ag::Var projections;  // (N, proj_dim)
};

// Batched forward on an open tape; spectra is (N, bands).
EncodedVars encode_tape(nn::TapeCtx& ctx, const EncoderState& st, const Array& spectra);

struct Encoded {
  Array features;
  Array projections;
};

Encoded encode(const EncoderState& st, const Array& spectra);

// Normalized-temperature cross entropy over Q positive pairs. z1 and z2 are
// (Q, D) with pair q in matching rows; every loss term ranks the positive
// against the other 2Q - 2 samples by cosine similarity at temperature tau,
// and both orderings of each pair are averaged.
ag::Var nt_xent_loss_var(const ag::Var& z1, const ag::Var& z2, double tau);
double nt_xent_loss(const Array& z1, const Array& z2, double tau);

// Cross-phase positive pairs: spectra from both phases at the same location,
// drawn without replacement from pixels pseudo-labeled unchanged.
struct PairBatch {
  Array anchors;    // (Q, C) first-phase spectra
  Array positives;  // (Q, C) second-phase spectra
  std::vector<std::pair<int64_t, int64_t>> coords;

  int64_t pairs() const { return anchors.rows(); }
};

PairBatch build_pairs(const BitemporalScene& scene, const PseudoLabelMap& pseudo,
                      int64_t batch_size, Rng& rng);

}  // namespace hscd
