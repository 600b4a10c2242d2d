#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hscd/checkpoint.hpp"
#include "hscd/common.hpp"
#include "hscd/pipeline.hpp"
#include "hscd/textio.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  bool desk = false;
  std::vector<std::string> sets;
  int64_t seed = -1;
  std::string scene;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration file");
  cmd->add_flag("--desk", args.desk, "start from the desk-scale profile instead of paper defaults");
  cmd->add_option("--set", args.sets, "override a config field, KEY=VALUE, repeatable");
  cmd->add_option("--seed", args.seed, "override the root seed");
  cmd->add_option("--scene", args.scene, "override the scene path");
}

hscd::RunConfig resolve_config(const CommonArgs& args) {
  hscd::RunConfig cfg;
  if (!args.config_path.empty()) {
    if (args.desk) throw hscd::InvariantError("--config and --desk are mutually exclusive");
    cfg = hscd::load_config(args.config_path);
  } else if (args.desk) {
    cfg = hscd::desk_profile();
  }
  for (const std::string& kv : args.sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw hscd::InvariantError("--set expects KEY=VALUE, got \"" + kv + "\"");
    hscd::set_config_field(cfg, kv.substr(0, eq), kv.substr(eq + 1), "--set");
  }
  if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
  if (!args.scene.empty()) cfg.scene_path = args.scene;
  return cfg;
}

std::vector<int64_t> parse_t_list(const std::string& csv) {
  std::vector<int64_t> out;
  size_t pos = 0;
  while (pos <= csv.size()) {
    const size_t comma = csv.find(',', pos);
    const std::string item = csv.substr(pos, comma == std::string::npos ? csv.size() - pos
                                                                        : comma - pos);
    out.push_back(hscd::textio::parse_int(item, "--timesteps", "command line"));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised hyperspectral change detection"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string out_dir = "out";
  std::string scdm, encoder, head, resume, map_path, scene_path, t_csv = "200,50,10,5,0";

  hscd::SynthConfig synth_cfg;
  int64_t synth_seed = 0;
  CLI::App* synth = app.add_subcommand("synth", "generate a labeled synthetic scene");
  synth->add_option("--bands", synth_cfg.bands, "spectral bands");
  synth->add_option("--height", synth_cfg.height, "scene rows");
  synth->add_option("--width", synth_cfg.width, "scene cols");
  synth->add_option("--materials", synth_cfg.n_materials, "material endmembers");
  synth->add_option("--change-fraction", synth_cfg.change_fraction, "true-change area fraction");
  synth->add_option("--noise-sigma", synth_cfg.noise_sigma, "sensor noise level");
  synth->add_option("--name", synth_cfg.name, "scene name");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", out_dir, "output directory");

  CLI::App* pretrain = app.add_subcommand("pretrain", "stage 1: train the denoiser");
  add_common(pretrain, common);
  pretrain->add_option("--resume", resume, "continue from an existing denoiser checkpoint");
  pretrain->add_option("--out", out_dir, "output directory");

  CLI::App* train = app.add_subcommand("train", "stage 2: train the encoder and CD head");
  add_common(train, common);
  train->add_option("--scdm", scdm, "denoiser checkpoint")->required();
  train->add_option("--out", out_dir, "output directory");

  CLI::App* infer = app.add_subcommand("infer", "produce a change map");
  add_common(infer, common);
  infer->add_option("--scdm", scdm, "denoiser checkpoint")->required();
  infer->add_option("--encoder", encoder, "encoder checkpoint")->required();
  infer->add_option("--head", head, "CD head checkpoint")->required();
  infer->add_option("--out", out_dir, "output directory");

  CLI::App* evaluate = app.add_subcommand("evaluate", "score a change map against ground truth");
  evaluate->add_option("--map", map_path, "change-map directory")->required();
  evaluate->add_option("--scene", scene_path, "labeled scene directory")->required();
  evaluate->add_option("--out", out_dir, "output directory");

  CLI::App* pseudo = app.add_subcommand("pseudo-label", "run the classical pseudo-labeler");
  add_common(pseudo, common);
  pseudo->add_option("--out", out_dir, "output directory");

  CLI::App* recon = app.add_subcommand("reconstruct", "denoising demo at chosen timesteps");
  add_common(recon, common);
  recon->add_option("--scdm", scdm, "denoiser checkpoint")->required();
  recon->add_option("--timesteps", t_csv, "comma-separated timesteps");
  recon->add_option("--out", out_dir, "output directory");

  CLI::App* show = app.add_subcommand("config", "print the resolved configuration");
  add_common(show, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      synth_cfg.seed = static_cast<uint64_t>(synth_seed);
      const std::string path = hscd::cmd_synth(synth_cfg, out_dir);
      std::printf("scene %s\n", path.c_str());
    } else if (pretrain->parsed()) {
      const auto out = hscd::cmd_pretrain(resolve_config(common), out_dir, resume);
      std::printf("checkpoint %s\n", out.checkpoint.c_str());
      std::printf("final loss %s\n", hscd::textio::fmt_double(out.epoch_loss.back()).c_str());
    } else if (train->parsed()) {
      const auto out = hscd::cmd_train(resolve_config(common), scdm, out_dir);
      std::printf("encoder %s\n", out.encoder_checkpoint.c_str());
      std::printf("head %s\n", out.head_checkpoint.c_str());
      std::printf("pseudo %s\n", out.pseudo_map.c_str());
      std::printf("final loss %s\n", hscd::textio::fmt_double(out.epoch_loss.back()).c_str());
    } else if (infer->parsed()) {
      const std::string path = hscd::cmd_infer(resolve_config(common), scdm, encoder, head, out_dir);
      std::printf("map %s\n", path.c_str());
    } else if (evaluate->parsed()) {
      const hscd::MetricsReport rep = hscd::cmd_evaluate(map_path, scene_path, out_dir);
      std::fputs(hscd::format_report(rep).c_str(), stdout);
    } else if (pseudo->parsed()) {
      const std::string path = hscd::cmd_pseudo_label(resolve_config(common), out_dir);
      std::printf("pseudo %s\n", path.c_str());
    } else if (recon->parsed()) {
      const auto out =
          hscd::cmd_reconstruct(resolve_config(common), scdm, parse_t_list(t_csv), out_dir);
      for (size_t i = 0; i < out.t_list.size(); ++i)
        std::printf("t %lld mse_t1 %s mse_t2 %s\n", static_cast<long long>(out.t_list[i]),
                    hscd::textio::fmt_double(out.mse_t1[i]).c_str(),
                    hscd::textio::fmt_double(out.mse_t2[i]).c_str());
    } else if (show->parsed()) {
      std::fputs(hscd::config_text(resolve_config(common)).c_str(), stdout);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
