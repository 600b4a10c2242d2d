#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hscd/config.hpp"

using namespace hscd;

TEST_CASE("defaults carry the published training settings") {
  const RunConfig c;
  CHECK(c.schedule_steps == 200);
  CHECK(c.beta_start == 1e-4);
  CHECK(c.beta_end == 0.02);
  CHECK(c.patch_k == 7);
  CHECK(c.pretrain_batch == 128);
  CHECK(c.pretrain_lr == 1e-5);
  CHECK(c.train_epochs == 200);
  CHECK(c.train_batch == 128);
  CHECK(c.lr0 == 1.0);
  CHECK(c.lambda_con == 1.0);
  CHECK(c.tau == 0.5);
  CHECK(c.feature_timesteps == std::vector<int64_t>{5, 10, 100});
  CHECK(c.select_changed == 500);
  CHECK(c.select_unchanged == 500);
  CHECK(c.pseudo_block == 5);
  CHECK(c.pseudo_components == 3);
}

TEST_CASE("every field survives a text round trip") {
  RunConfig c = desk_profile();
  c.scene_path = "scenes/demo";
  c.seed = 42;
  c.beta_end = 0.0217;
  c.feature_timesteps = {3, 77};
  c.use_scdm = false;
  c.lambda_con = 0.25;
  c.tau = 0.13;

  const std::string text = config_text(c);
  const RunConfig back = parse_config_text(text, "inline");
  CHECK(config_text(back) == text);
  CHECK(back.scene_path == "scenes/demo");
  CHECK(back.seed == 42);
  CHECK(back.beta_end == 0.0217);
  CHECK(back.feature_timesteps == std::vector<int64_t>{3, 77});
  CHECK(back.use_scdm == false);
  CHECK(back.lambda_con == 0.25);
  CHECK(back.tau == 0.13);
}

TEST_CASE("file round trip preserves the config") {
  namespace fs = std::filesystem;
  const fs::path file = fs::temp_directory_path() / "hscd-config-test.cfg";
  RunConfig c = desk_profile();
  c.scene_path = "somewhere";
  save_config(c, file.string());
  const RunConfig back = load_config(file.string());
  CHECK(config_text(back) == config_text(c));
  fs::remove(file);
  CHECK_THROWS_AS(load_config(file.string()), IoError);
}

TEST_CASE("parse errors name the field and the source") {
  CHECK_THROWS_WITH_AS(parse_config_text("bogus.key 3\n", "test.cfg"),
                       "test.cfg: unknown config field bogus.key", IoError);
  CHECK_THROWS_WITH_AS(parse_config_text("seed notanumber\n", "test.cfg"),
                       "test.cfg: field seed is not a nonnegative integer: notanumber", IoError);
  CHECK_THROWS_WITH_AS(parse_config_text("justakey\n", "test.cfg"),
                       "test.cfg:1: expected \"key value\", got \"justakey\"", IoError);
  CHECK_THROWS_AS(parse_config_text("encoder.tau x\n", "test.cfg"), IoError);
  CHECK_THROWS_AS(parse_config_text("head.use_scdm 2\n", "test.cfg"), IoError);
  CHECK_THROWS_AS(parse_config_text("predictor.feature_timesteps \n", "t"), IoError);

  // Comments and blank lines are fine.
  CHECK_NOTHROW(parse_config_text("# a comment\n\nseed 9\n", "test.cfg"));
}

TEST_CASE("builders assemble validated module configs") {
  const RunConfig c = desk_profile();
  const NoiseSchedule sched = config_schedule(c);
  CHECK(sched.steps == 200);

  const PredictorConfig pc = predictor_config(c, 16);
  CHECK(pc.bands == 16);
  CHECK(pc.k == c.patch_k);
  CHECK(pc.feature_dim == c.feature_dim);

  const EncoderConfig ec = encoder_config(c, 16);
  CHECK(ec.bands == 16);
  CHECK(ec.feature_dim == c.feature_dim);

  const HeadConfig hc = head_config(c);
  CHECK(hc.k == c.patch_k);

  RunConfig seeded = c;
  seeded.seed = 77;
  const Stage2Config sc = stage2_config(seeded, 16);
  CHECK(sc.feature_seed == 77);
  CHECK(sc.encoder.feature_dim == sc.head.feature_dim);
  CHECK(infer_config(seeded).feature_seed == 77);

  RunConfig bad = c;
  bad.patch_k = 4;  // even patches have no center pixel
  CHECK_THROWS_AS(predictor_config(bad, 16), InvariantError);
  CHECK_THROWS_AS(head_config(bad), InvariantError);
}

TEST_CASE("paper-scale and desk-scale profiles both build") {
  for (const RunConfig& c : {RunConfig{}, desk_profile()}) {
    CHECK_NOTHROW(predictor_config(c, 16));
    CHECK_NOTHROW(stage2_config(c, 16));
    CHECK_NOTHROW(config_schedule(c));
  }
}
