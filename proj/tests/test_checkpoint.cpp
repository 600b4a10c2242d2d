#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hscd/checkpoint.hpp"
#include "hscd/diffusion.hpp"

using namespace hscd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("hscd-ckpt-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int n = 0;
    return n;
  }
  std::string sub(const char* name) const { return (path / name).string(); }
};

PredictorState tiny_predictor(const NoiseSchedule& sched, uint64_t seed) {
  PredictorConfig pc;
  pc.bands = 6;
  pc.k = 3;
  pc.token_dim = 8;
  pc.n_heads = 2;
  pc.depth = 2;
  pc.feature_dim = 4;
  pc.feature_timesteps = {5, 10, 40};
  Rng rng(seed);
  return init_predictor(pc, sched, rng);
}

}  // namespace

TEST_CASE("predictor checkpoints restore state and behavior bit for bit") {
  const NoiseSchedule sched = make_linear_schedule(50, 2e-4, 0.015);
  PredictorState st = tiny_predictor(sched, 3);
  // Perturb the non-tape statistics so the round trip covers them too.
  auto& mean = st.params.entry(st.params.index_of("band.mean")).value;
  for (int64_t i = 0; i < mean.size(); ++i) mean[i] = 0.1 * static_cast<double>(i) - 0.2;

  TempDir tmp;
  const std::string path = tmp.sub("pred");
  save_predictor(st, path);
  const PredictorState back = load_predictor(path);

  CHECK(back.config.bands == 6);
  CHECK(back.config.k == 3);
  CHECK(back.config.feature_timesteps == st.config.feature_timesteps);
  CHECK(back.schedule_steps == 50);
  CHECK(back.beta_start == 2e-4);
  CHECK(back.beta_end == 0.015);
  CHECK(back.params.flatten() == st.params.flatten());
  CHECK_NOTHROW(check_schedule(back, sched));

  Rng nrng(7);
  Array xt({6, 3, 3});
  for (int64_t i = 0; i < xt.size(); ++i) xt[i] = nrng.normal();
  const Array a = predict_noise(st, xt, 20, Cond::T1);
  const Array b = predict_noise(back, xt, 20, Cond::T1);
  CHECK(max_abs_diff(a, b) == 0.0);

  // Overwriting the same path is a plain refresh, not an append.
  save_predictor(back, path);
  CHECK(load_predictor(path).params.flatten() == st.params.flatten());
}

TEST_CASE("encoder and head checkpoints round trip") {
  EncoderConfig ec;
  ec.bands = 10;
  ec.chunk = 4;
  ec.token_dim = 8;
  ec.n_heads = 2;
  ec.depth = 1;
  ec.feature_dim = 6;
  ec.proj_dim = 4;
  ec.tau = 0.37;
  Rng erng(11);
  const EncoderState enc = init_encoder(ec, erng);

  HeadConfig hc;
  hc.feature_dim = 6;
  hc.k = 3;
  hc.depth = 1;
  hc.n_heads = 2;
  hc.use_scdm = false;
  Rng hrng(12);
  const HeadState head = init_head(hc, hrng);

  TempDir tmp;
  save_encoder(enc, tmp.sub("enc"));
  save_head(head, tmp.sub("head"));
  const EncoderState enc2 = load_encoder(tmp.sub("enc"));
  const HeadState head2 = load_head(tmp.sub("head"));

  CHECK(enc2.config.tau == 0.37);
  CHECK(enc2.config.chunk == 4);
  CHECK(enc2.params.flatten() == enc.params.flatten());
  CHECK(head2.config.use_scdm == false);
  CHECK(head2.config.k == 3);
  CHECK(head2.params.flatten() == head.params.flatten());

  Array spectra({3, 10});
  Rng srng(13);
  for (int64_t i = 0; i < spectra.size(); ++i) spectra[i] = srng.normal();
  CHECK(max_abs_diff(encode(enc, spectra).projections, encode(enc2, spectra).projections) == 0.0);
}

TEST_CASE("checkpoint loading rejects mismatched containers") {
  const NoiseSchedule sched = make_linear_schedule(50, 2e-4, 0.015);
  const PredictorState st = tiny_predictor(sched, 5);
  TempDir tmp;
  save_predictor(st, tmp.sub("pred"));

  CHECK_THROWS_AS(load_encoder(tmp.sub("pred")), IoError);  // wrong kind
  CHECK_THROWS_AS(load_predictor(tmp.sub("missing")), IoError);

  // Truncated parameter file.
  save_predictor(st, tmp.sub("cut"));
  fs::resize_file(fs::path(tmp.sub("cut")) / "params.raw", 16);
  CHECK_THROWS_AS(load_predictor(tmp.sub("cut")), IoError);

  // Manifest config that disagrees with the parameter table.
  save_predictor(st, tmp.sub("bent"));
  const fs::path meta = fs::path(tmp.sub("bent")) / "meta";
  std::ifstream in(meta);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const size_t pos = text.find("token_dim 8");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 11, "token_dim 4");
  std::ofstream out(meta, std::ios::trunc);
  out << text;
  out.close();
  CHECK_THROWS_AS(load_predictor(tmp.sub("bent")), IoError);
}

TEST_CASE("change maps round trip and validate their values") {
  ChangeMap map;
  map.scene_name = "roundtrip";
  map.height = 3;
  map.width = 4;
  map.decisions = {0, 1, 1, 0, 1, 0, 0, 1, 0, 0, 1, 1};

  TempDir tmp;
  save_change_map(map, tmp.sub("map"));
  const ChangeMap back = load_change_map(tmp.sub("map"));
  CHECK(back.scene_name == "roundtrip");
  CHECK(back.height == 3);
  CHECK(back.width == 4);
  CHECK(back.decisions == map.decisions);

  ChangeMap bad = map;
  bad.decisions[2] = 7;
  CHECK_THROWS_AS(save_change_map(bad, tmp.sub("bad")), InvariantError);

  std::ofstream raw(fs::path(tmp.sub("map")) / "map.raw",
                    std::ios::binary | std::ios::trunc);
  const char bytes[12] = {0, 1, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  raw.write(bytes, sizeof(bytes));
  raw.close();
  CHECK_THROWS_AS(load_change_map(tmp.sub("map")), IoError);
}
