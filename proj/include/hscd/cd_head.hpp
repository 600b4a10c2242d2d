#pragma once

#include <cstdint>
#include <vector>

#include "hscd/array.hpp"
#include "hscd/contrastive.hpp"
#include "hscd/nn.hpp"
#include "hscd/predictor.hpp"
#include "hscd/pseudo_label.hpp"
#include "hscd/scene.hpp"

namespace hscd {

// Change-detection head over fused feature maps: the K*K fused vectors are
// tokens for a small transformer with learned positions, and the center
// token is classified into {unchanged, changed}.
struct HeadConfig {
  int64_t feature_dim = 32;  // per-branch channel width D; fused maps are 2D
  int64_t k = 7;
  int64_t depth = 2;
  int n_heads = 4;
  bool use_scdm = true;  // when off, the diffusion branch is an all-zero map

  int64_t fused_dim() const { return 2 * feature_dim; }
  void validate() const;
};

struct HeadNet {
  nn::Linear diff_conv;  // 1x1 convolution, D -> 2D, applied to the difference
  int64_t pos = -1;      // (K*K, 2D)
  std::vector<nn::TransformerBlock> blocks;
  nn::LayerNorm out_norm;
  nn::Linear cls;  // 2D -> 2 logits
};

struct HeadState {
  HeadConfig config;
  nn::ParamStore params;
  HeadNet net;
};

HeadState init_head(const HeadConfig& cfg, Rng& rng);

// Three-branch average over token rows (M, D): a 1x1 convolution of the
// encoder difference, the encoder concatenation, and the denoiser
// concatenation, each 2D wide.
ag::Var fuse_tape(nn::TapeCtx& ctx, const HeadState& st, const ag::Var& ctcl1,
                  const ag::Var& ctcl2, const ag::Var& scdm1, const ag::Var& scdm2);

// Center-token classification of items*K*K fused rows into (items, 2) logits.
ag::Var classify_tape(nn::TapeCtx& ctx, const HeadState& st, const ag::Var& fused_rows,
                      int64_t items);

// Map-shaped wrappers over single patches, inputs (D, K, K).
Array fuse(const Array& ctcl1, const Array& ctcl2, const Array& scdm1, const Array& scdm2,
           const HeadState& st);
Array classify(const HeadState& st, const Array& fused_2dkk);  // 2 logits

// Mean binary cross entropy of the softmax changed-class probability, with
// probabilities clamped to [1e-7, 1 - 1e-7] before the logs.
ag::Var change_loss_var(const ag::Var& logits, const std::vector<uint8_t>& labels);
double change_loss(const Array& logits, const std::vector<uint8_t>& labels);

double total_loss(double change, double con, double lambda_con);
ag::Var total_loss_var(const ag::Var& change, const ag::Var& con, double lambda_con);

struct Stage2Config {
  EncoderConfig encoder;
  HeadConfig head;
  int64_t epochs = 30;
  int64_t batch_size = 16;        // patch pairs per optimizer step
  int64_t contrastive_pairs = 32; // positives per step, clamped to the pool
  double lr0 = 1.0;               // decays linearly, reaching 0 after the run
  double lambda_con = 1.0;
  uint64_t feature_seed = 0;      // root of the per-pixel denoising streams

  void validate() const;
};

struct Stage2Result {
  EncoderState encoder;
  HeadState head;
  std::vector<double> epoch_loss;
};

// Trains encoder and head on pseudo-labeled patches with the summed change +
// contrastive objective; the denoiser only supplies precomputed features and
// is asserted bit-identical afterwards. Contrastive positives are the
// cross-phase spectra of training pixels labeled unchanged.
Stage2Result train_stage2(const BitemporalScene& scene, const PredictorState& predictor,
                          const NoiseSchedule& sched, const TrainingPixels& pixels,
                          const Stage2Config& cfg, Rng& rng);

struct InferConfig {
  int64_t batch_pixels = 256;
  uint64_t feature_seed = 0;  // must match the training-time value
};

// Classifies every pixel of the scene. Encoder features are computed once
// per scene pixel and gathered into mirror-padded windows; denoiser features
// are drawn per pixel from fixed named substreams, so repeated runs agree
// bit for bit.
ChangeMap infer_map(const BitemporalScene& scene, const PredictorState& predictor,
                    const NoiseSchedule& sched, const EncoderState& encoder,
                    const HeadState& head, const InferConfig& cfg);

}  // namespace hscd
