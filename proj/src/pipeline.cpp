#include "hscd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "hscd/checkpoint.hpp"
#include "hscd/common.hpp"
#include "hscd/pseudo_label.hpp"
#include "hscd/scene.hpp"
#include "hscd/textio.hpp"

namespace hscd {

namespace fs = std::filesystem;

namespace {

void write_loss_log(const std::string& path, const std::vector<double>& losses, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot open loss log " + path);
  for (const double l : losses) out << textio::fmt_double(l) << "\n";
  if (!out) throw IoError("write failed on " + path);
}

BitemporalScene load_config_scene(const RunConfig& cfg) {
  require(!cfg.scene_path.empty(), "config field scene is required");
  return load_scene(cfg.scene_path);
}

PseudoLabelMap make_pseudo(const BitemporalScene& scene, const RunConfig& cfg) {
  return pca_kmeans_pseudolabel(difference_image(scene), cfg.pseudo_block,
                                cfg.pseudo_components);
}

ChangeMap pseudo_as_map(const PseudoLabelMap& pseudo, const std::string& name) {
  ChangeMap map;
  map.scene_name = name;
  map.height = pseudo.height;
  map.width = pseudo.width;
  map.decisions = pseudo.labels;
  return map;
}

// Tile centers covering [0, n) with K-wide windows; the final center is
// pulled back so the last tile stays in bounds (overlapping its neighbor).
std::vector<int64_t> tile_axis(int64_t n, int64_t k) {
  const int64_t half = k / 2;
  require(n >= k, "scene side shorter than the patch size");
  std::vector<int64_t> cs;
  for (int64_t c = half; c < n - half; c += k) cs.push_back(c);
  if (cs.back() + half < n - 1) cs.push_back(n - 1 - half);
  return cs;
}

RgbImage pseudo_color(const Array& cube, int64_t c, int64_t h, int64_t w,
                      const int64_t band[3], const double lo[3], const double hi[3]) {
  RgbImage img;
  img.height = h;
  img.width = w;
  img.rgb.resize(static_cast<size_t>(h * w * 3));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int i = 0; i < 3; ++i) {
        const double v = cube[(band[i] * h + y) * w + x];
        const double span = hi[i] > lo[i] ? hi[i] - lo[i] : 1.0;
        const double u = std::clamp((v - lo[i]) / span, 0.0, 1.0);
        img.rgb[static_cast<size_t>((y * w + x) * 3 + i)] =
            static_cast<uint8_t>(std::lround(u * 255.0));
      }
  return img;
}

}  // namespace

std::string cmd_synth(const SynthConfig& cfg, const std::string& out_dir) {
  const BitemporalScene scene = generate_scene(cfg);
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / scene.name).string();
  save_scene(scene, path);
  return path;
}

PretrainOutput cmd_pretrain(const RunConfig& cfg, const std::string& out_dir,
                            const std::string& resume_from) {
  const BitemporalScene scene = load_config_scene(cfg);
  const NoiseSchedule sched = config_schedule(cfg);
  const PretrainConfig opt = pretrain_config(cfg);
  Rng rng = substream_rng(cfg.seed, "stage1");

  PretrainResult res =
      resume_from.empty()
          ? pretrain({scene}, predictor_config(cfg, scene.bands), sched, opt, rng)
          : pretrain_from(load_predictor(resume_from), {scene}, sched, opt, rng);

  fs::create_directories(out_dir);
  PretrainOutput out;
  out.checkpoint = (fs::path(out_dir) / "scdm").string();
  out.epoch_loss = res.epoch_loss;
  save_predictor(res.state, out.checkpoint);
  const std::string log = (fs::path(out_dir) / "pretrain_loss.txt").string();
  write_loss_log(log, res.epoch_loss, !resume_from.empty() && fs::exists(log));
  return out;
}

TrainOutput cmd_train(const RunConfig& cfg, const std::string& scdm_checkpoint,
                      const std::string& out_dir) {
  const BitemporalScene scene = load_config_scene(cfg);
  const PredictorState predictor = load_predictor(scdm_checkpoint);
  const NoiseSchedule sched = config_schedule(cfg);

  const PseudoLabelMap pseudo = make_pseudo(scene, cfg);
  Rng sel_rng = substream_rng(cfg.seed, "selection");
  const TrainingPixels pixels =
      select_training_pixels(pseudo, cfg.select_changed, cfg.select_unchanged, sel_rng);

  Rng rng = substream_rng(cfg.seed, "stage2");
  Stage2Result res =
      train_stage2(scene, predictor, sched, pixels, stage2_config(cfg, scene.bands), rng);

  fs::create_directories(out_dir);
  TrainOutput out;
  out.encoder_checkpoint = (fs::path(out_dir) / "encoder").string();
  out.head_checkpoint = (fs::path(out_dir) / "head").string();
  out.pseudo_map = (fs::path(out_dir) / "pseudo").string();
  out.epoch_loss = res.epoch_loss;
  save_encoder(res.encoder, out.encoder_checkpoint);
  save_head(res.head, out.head_checkpoint);
  save_pseudo_map(pseudo, out.pseudo_map);
  write_loss_log((fs::path(out_dir) / "train_loss.txt").string(), res.epoch_loss, false);
  return out;
}

std::string cmd_pseudo_label(const RunConfig& cfg, const std::string& out_dir) {
  const BitemporalScene scene = load_config_scene(cfg);
  const PseudoLabelMap pseudo = make_pseudo(scene, cfg);
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "pseudo").string();
  save_pseudo_map(pseudo, path);
  if (scene.has_labels()) {
    const MetricsReport rep = report(confusion(pseudo_as_map(pseudo, scene.name), scene.labels));
    write_report(rep, (fs::path(out_dir) / "pseudo_report.txt").string());
  }
  return path;
}

std::string cmd_infer(const RunConfig& cfg, const std::string& scdm_checkpoint,
                      const std::string& encoder_checkpoint, const std::string& head_checkpoint,
                      const std::string& out_dir) {
  const BitemporalScene scene = load_config_scene(cfg);
  const PredictorState predictor = load_predictor(scdm_checkpoint);
  const EncoderState encoder = load_encoder(encoder_checkpoint);
  const HeadState head = load_head(head_checkpoint);
  const NoiseSchedule sched = config_schedule(cfg);

  const ChangeMap map = infer_map(scene, predictor, sched, encoder, head, infer_config(cfg));
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "map").string();
  save_change_map(map, path);
  return path;
}

MetricsReport cmd_evaluate(const std::string& map_path, const std::string& scene_path,
                           const std::string& out_dir) {
  const ChangeMap map = load_change_map(map_path);
  const BitemporalScene scene = load_scene(scene_path);
  require(scene.has_labels(), "scene " + scene_path + " carries no ground-truth labels");
  require(map.height == scene.height && map.width == scene.width,
          "map " + map_path + " does not match the scene dimensions");

  const MetricsReport rep = report(confusion(map, scene.labels));
  fs::create_directories(out_dir);
  write_report(rep, (fs::path(out_dir) / "report.txt").string());
  write_png(render_map(map, scene.labels), (fs::path(out_dir) / "map.png").string());
  return rep;
}

ReconstructOutput cmd_reconstruct(const RunConfig& cfg, const std::string& scdm_checkpoint,
                                  const std::vector<int64_t>& t_list, const std::string& out_dir) {
  require(!t_list.empty(), "reconstruction needs at least one timestep");
  const BitemporalScene scene = load_config_scene(cfg);
  const PredictorState predictor = load_predictor(scdm_checkpoint);
  const NoiseSchedule sched = config_schedule(cfg);
  check_schedule(predictor, sched);
  require(scene.bands == predictor.config.bands, "scene bands do not match the denoiser");
  for (const int64_t t : t_list)
    require(t >= 0 && t <= sched.steps,
            "timestep " + std::to_string(t) + " outside [0," + std::to_string(sched.steps) + "]");

  const int64_t c = scene.bands;
  const int64_t h = scene.height;
  const int64_t w = scene.width;
  const int64_t k = predictor.config.k;
  const int64_t kk = k * k;
  const int64_t half = k / 2;

  std::vector<std::pair<int64_t, int64_t>> tiles;
  for (const int64_t cy : tile_axis(h, k))
    for (const int64_t cx : tile_axis(w, k)) tiles.emplace_back(cy, cx);
  const int64_t n = static_cast<int64_t>(tiles.size());

  const int64_t band[3] = {c - 1, c / 2, 0};
  fs::create_directories(out_dir);

  ReconstructOutput out;
  out.t_list = t_list;
  std::ofstream mse_log(fs::path(out_dir) / "mse.txt", std::ios::trunc);
  if (!mse_log) throw IoError("cannot create mse log in " + out_dir);
  mse_log << "# t mse_t1 mse_t2\n";

  for (const Phase phase : {Phase::T1, Phase::T2}) {
    const char* tag = phase == Phase::T1 ? "t1" : "t2";
    Array original({c, h, w});
    for (int64_t b = 0; b < c; ++b)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          original[(b * h + y) * w + x] = static_cast<double>(scene.at(phase, b, y, x));

    double lo[3], hi[3];
    for (int i = 0; i < 3; ++i) {
      lo[i] = std::numeric_limits<double>::infinity();
      hi[i] = -lo[i];
      for (int64_t p = 0; p < h * w; ++p) {
        const double v = original[band[i] * h * w + p];
        lo[i] = std::min(lo[i], v);
        hi[i] = std::max(hi[i], v);
      }
    }
    write_png(pseudo_color(original, c, h, w, band, lo, hi),
              (fs::path(out_dir) / ("original_" + std::string(tag) + ".png")).string());

    const PatchBatch pb = extract_patches(scene, phase, tiles, k);
    Array rows({n * kk, c});
    for (int64_t i = 0; i < n; ++i) {
      const Array one = patch_to_rows(pb.patch(i), c, k);
      std::copy(one.vec().begin(), one.vec().end(), rows.vec().begin() + i * kk * c);
    }
    standardize_rows(predictor, rows);

    for (const int64_t t : t_list) {
      Array recon = original;
      double mse = 0.0;
      if (t > 0) {
        Array eps({n * kk, c});
        for (int64_t i = 0; i < n; ++i) {
          Rng erng = substream_rng(cfg.seed, "recon",
                                   {static_cast<uint64_t>(phase), static_cast<uint64_t>(t),
                                    static_cast<uint64_t>(i)});
          for (int64_t j = 0; j < kk * c; ++j) eps[i * kk * c + j] = erng.normal();
        }
        const Array xt = forward_diffuse(rows, t - 1, eps, sched);
        const std::vector<int64_t> ts(static_cast<size_t>(n), t - 1);
        const std::vector<Cond> conds(static_cast<size_t>(n), to_cond(phase));
        const Array eps_hat = predict_noise_rows(predictor, xt, ts, conds);
        Array x0 = estimate_x0(xt, t - 1, eps_hat, sched);
        unstandardize_rows(predictor, x0);
        for (int64_t i = 0; i < n; ++i) {
          const auto [cy, cx] = tiles[static_cast<size_t>(i)];
          for (int64_t dy = -half; dy <= half; ++dy)
            for (int64_t dx = -half; dx <= half; ++dx)
              for (int64_t b = 0; b < c; ++b)
                recon[(b * h + cy + dy) * w + cx + dx] =
                    x0.at(i * kk + (dy + half) * k + (dx + half), b);
        }
        for (int64_t j = 0; j < recon.size(); ++j) {
          const double d = recon[j] - original[j];
          mse += d * d;
        }
        mse /= static_cast<double>(recon.size());
      }
      (phase == Phase::T1 ? out.mse_t1 : out.mse_t2).push_back(mse);

      const std::string img = (fs::path(out_dir) / ("recon_" + std::string(tag) + "_t" +
                                                    std::to_string(t) + ".png"))
                                  .string();
      write_png(pseudo_color(recon, c, h, w, band, lo, hi), img);
      out.images.push_back(img);
    }
  }

  for (size_t i = 0; i < t_list.size(); ++i)
    mse_log << t_list[i] << " " << textio::fmt_double(out.mse_t1[i]) << " "
            << textio::fmt_double(out.mse_t2[i]) << "\n";
  if (!mse_log) throw IoError("write failed on mse log in " + out_dir);
  return out;
}

}  // namespace hscd
