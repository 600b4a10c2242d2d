#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hscd/array.hpp"
#include "hscd/diffusion.hpp"
#include "hscd/nn.hpp"
#include "hscd/rng.hpp"
#include "hscd/scene.hpp"

namespace hscd {

// Token-transformer noise predictor over spectral patches. A patch becomes
// K*K per-pixel spectrum tokens plus one timestep token and one acquisition
// condition token; the first depth/2 blocks form a shallow stream whose
// outputs feed cross-attention in the mirrored deep blocks.
struct PredictorConfig {
  int64_t bands = 0;
  int64_t k = 7;
  int64_t token_dim = 64;
  int n_heads = 4;
  int64_t depth = 4;  // must be even
  int64_t feature_dim = 32;
  std::vector<int64_t> feature_timesteps{5, 10, 100};

  int64_t seq_len() const { return k * k + 2; }
  void validate() const;
};

// Layer handles into the parameter store. Registration order is fixed, so a
// state rebuilt from the same config maps every name to the same slot.
struct PredictorNet {
  nn::Linear spectral;
  nn::Linear time_fc1, time_fc2;
  int64_t cond_table = -1;  // (3, D): rows for first phase, second phase, none
  int64_t pos = -1;         // (L, D)
  std::vector<nn::TransformerBlock> shallow;
  std::vector<nn::CrossBlock> deep;
  nn::LayerNorm out_norm;
  nn::Linear out_proj;
  int64_t feat_proj = -1;  // (3C, feature_dim), fixed random, never optimized
  int64_t band_mean = -1;  // (1, C) standardization stats, set from data
  int64_t band_std = -1;
};

struct PredictorState {
  PredictorConfig config;
  int64_t schedule_steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  nn::ParamStore params;
  PredictorNet net;
};

PredictorState init_predictor(const PredictorConfig& cfg, const NoiseSchedule& sched, Rng& rng);

// Fails when the schedule differs from the one the state was built against.
void check_schedule(const PredictorState& st, const NoiseSchedule& sched);

// Bridges between the band-major patch layout (C, K, K) and the token matrix
// (K*K, C) the network consumes; token row p holds pixel (p / K, p % K).
Array patch_to_rows(const float* patch, int64_t bands, int64_t k);
Array patch_to_rows(const Array& patch_ckk);
Array rows_to_patch(const Array& rows, int64_t channels, int64_t k);

// Per-band shift/scale into the space the predictor was trained on.
void standardize_rows(const PredictorState& st, Array& rows);
void unstandardize_rows(const PredictorState& st, Array& rows);

// Batched forward on an open tape: xt_rows is (N*K*K, C) in item-major order
// with one timestep and condition per item; returns predicted noise rows.
ag::Var predict_tape(nn::TapeCtx& ctx, const PredictorState& st, const Array& xt_rows,
                     const std::vector<int64_t>& ts, const std::vector<Cond>& conds);

// Tape-free batched inference with the same layout contract as predict_tape.
Array predict_noise_rows(const PredictorState& st, const Array& xt_rows,
                         const std::vector<int64_t>& ts, const std::vector<Cond>& conds);

// Single-patch inference in the standardized band space.
Array predict_noise(const PredictorState& st, const Array& xt_ckk, int64_t t, Cond cond);

using PatchPredictFn = std::function<Array(const Array& xt_rows, int64_t t, Cond cond)>;

// Denoising features for the change head: for each configured timestep the
// patch is standardized, noised, denoised back to an x0 estimate, and the
// per-pixel estimates are concatenated over bands (3C) then sent through the
// fixed 1x1 projection to feature_dim channels. `predict` sees the noisy
// token rows in the standardized space.
Array extract_features_with(const PredictorState& st, const Array& x0_ckk, Cond cond,
                            const NoiseSchedule& sched, Rng& rng, const PatchPredictFn& predict);
Array extract_features(const PredictorState& st, const Array& x0_ckk, Cond cond,
                       const NoiseSchedule& sched, Rng& rng);

// Batched variant: x0_rows stacks n patches ((n*K*K, C), raw band space) and
// item n draws its noise from item_rngs[n], so outputs are identical to n
// independent extract_features calls seeded the same way.
Array extract_features_rows(const PredictorState& st, const Array& x0_rows,
                            std::vector<Rng>& item_rngs, Cond cond, const NoiseSchedule& sched);

struct PretrainConfig {
  int64_t epochs = 30;
  int64_t patches_per_epoch = 512;
  int64_t batch_size = 128;
  double lr = 1e-5;
  double weight_decay = 0.01;
};

struct PretrainResult {
  PredictorState state;
  std::vector<double> epoch_loss;  // one mean noise loss per epoch
};

// Stage-1 training: patch centers are drawn uniformly over every pixel of
// both phases of every scene, each item gets a uniform random timestep, and
// the noise objective is optimized with decoupled weight decay. Band
// statistics are computed from the scenes before the first step.
PretrainResult pretrain(const std::vector<BitemporalScene>& scenes, const PredictorConfig& cfg,
                        const NoiseSchedule& sched, const PretrainConfig& opt, Rng& rng);

// Continues training an existing state (band statistics are kept, fresh
// optimizer moments). Used to resume from a checkpoint.
PretrainResult pretrain_from(PredictorState state, const std::vector<BitemporalScene>& scenes,
                             const NoiseSchedule& sched, const PretrainConfig& opt, Rng& rng);

// Mean noise loss over freshly sampled patches, no parameter updates.
double validation_loss(const PredictorState& st, const std::vector<BitemporalScene>& scenes,
                       const NoiseSchedule& sched, int64_t n_patches, Rng& rng);

}  // namespace hscd
