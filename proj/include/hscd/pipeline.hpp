#pragma once

#include <string>
#include <vector>

#include "hscd/config.hpp"
#include "hscd/metrics.hpp"
#include "hscd/synth.hpp"

namespace hscd {

// Orchestration behind the CLI subcommands. Every command writes its
// artifacts under an output directory and returns the primary paths, so the
// functions are directly testable without a process boundary. All randomness
// is derived from RunConfig::seed through named substreams ("stage1",
// "selection", "stage2", "scdm.feat", "recon"), which makes whole-pipeline
// runs reproducible bit for bit.

std::string cmd_synth(const SynthConfig& cfg, const std::string& out_dir);

struct PretrainOutput {
  std::string checkpoint;
  std::vector<double> epoch_loss;
};
// Stage 1. With resume_from set, training continues from that checkpoint and
// the loss log grows instead of starting over.
PretrainOutput cmd_pretrain(const RunConfig& cfg, const std::string& out_dir,
                            const std::string& resume_from = "");

struct TrainOutput {
  std::string encoder_checkpoint;
  std::string head_checkpoint;
  std::string pseudo_map;
  std::vector<double> epoch_loss;
};
// Stage 2: pseudo-labels the scene, selects training pixels, trains the
// contrastive encoder and CD head against the frozen denoiser.
TrainOutput cmd_train(const RunConfig& cfg, const std::string& scdm_checkpoint,
                      const std::string& out_dir);

// Pseudo-labeling alone; writes the map and, when the scene carries ground
// truth, a quality report against it.
std::string cmd_pseudo_label(const RunConfig& cfg, const std::string& out_dir);

std::string cmd_infer(const RunConfig& cfg, const std::string& scdm_checkpoint,
                      const std::string& encoder_checkpoint, const std::string& head_checkpoint,
                      const std::string& out_dir);

MetricsReport cmd_evaluate(const std::string& map_path, const std::string& scene_path,
                           const std::string& out_dir);

struct ReconstructOutput {
  std::vector<int64_t> t_list;
  std::vector<double> mse_t1;  // one value per t, reflectance units
  std::vector<double> mse_t2;
  std::vector<std::string> images;
};
// Denoising demo: noises the scene to each listed timestep, reconstructs the
// clean estimate tile by tile, and writes pseudo-color composites. t = 0
// bypasses the model entirely and reproduces the input exactly.
ReconstructOutput cmd_reconstruct(const RunConfig& cfg, const std::string& scdm_checkpoint,
                                  const std::vector<int64_t>& t_list, const std::string& out_dir);

}  // namespace hscd
