#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hscd/cd_head.hpp"
#include "hscd/contrastive.hpp"
#include "hscd/diffusion.hpp"
#include "hscd/predictor.hpp"

namespace hscd {

// One flat key-value view of every runtime knob. Defaults are the paper-scale
// settings; desk_profile() swaps in dimensions and epoch counts that finish
// on a CPU in minutes. Band counts come from the scene at load time, so the
// model configs are assembled through the builder functions below.
struct RunConfig {
  std::string scene_path;
  uint64_t seed = 0;

  int64_t schedule_steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  int64_t patch_k = 7;      // shared by the denoiser and the CD head
  int64_t feature_dim = 32; // shared by all three fusion inputs

  int64_t predictor_token_dim = 64;
  int predictor_heads = 4;
  int64_t predictor_depth = 4;
  std::vector<int64_t> feature_timesteps{5, 10, 100};

  int64_t pretrain_epochs = 30;
  int64_t pretrain_patches = 512;
  int64_t pretrain_batch = 128;
  double pretrain_lr = 1e-5;
  double pretrain_weight_decay = 0.01;

  int64_t encoder_chunk = 4;
  int64_t encoder_token_dim = 32;
  int encoder_heads = 4;
  int64_t encoder_depth = 2;
  int64_t proj_dim = 16;
  double tau = 0.5;

  int64_t head_depth = 2;
  int head_heads = 4;
  bool use_scdm = true;

  int64_t train_epochs = 200;
  int64_t train_batch = 128;
  int64_t contrastive_pairs = 32;
  double lr0 = 1.0;
  double lambda_con = 1.0;

  int64_t pseudo_block = 5;
  int64_t pseudo_components = 3;
  int64_t select_changed = 500;
  int64_t select_unchanged = 500;

  int64_t infer_batch_pixels = 256;
};

RunConfig desk_profile();

// Parsing applies one "key value" line at a time; unknown keys and malformed
// values raise errors naming the key and the source. Writing emits every key,
// so save -> load is an identity.
void set_config_field(RunConfig& cfg, const std::string& key, const std::string& value,
                      const std::string& origin);
RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig load_config(const std::string& path);
std::string config_text(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::string& path);

NoiseSchedule config_schedule(const RunConfig& cfg);
PredictorConfig predictor_config(const RunConfig& cfg, int64_t bands);
PretrainConfig pretrain_config(const RunConfig& cfg);
EncoderConfig encoder_config(const RunConfig& cfg, int64_t bands);
HeadConfig head_config(const RunConfig& cfg);
Stage2Config stage2_config(const RunConfig& cfg, int64_t bands);
InferConfig infer_config(const RunConfig& cfg);

}  // namespace hscd
