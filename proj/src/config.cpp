#include "hscd/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "hscd/common.hpp"
#include "hscd/textio.hpp"

namespace hscd {

namespace {

using textio::fmt_double;
using textio::parse_double;
using textio::parse_int;
using textio::parse_uint;

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

Field int_field(const char* key, int64_t RunConfig::* member) {
  return {key,
          [key, member](RunConfig& c, const std::string& v, const std::string& origin) {
            c.*member = parse_int(v, key, origin);
          },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field real_field(const char* key, double RunConfig::* member) {
  return {key,
          [key, member](RunConfig& c, const std::string& v, const std::string& origin) {
            c.*member = parse_double(v, key, origin);
          },
          [member](const RunConfig& c) { return fmt_double(c.*member); }};
}

Field heads_field(const char* key, int RunConfig::* member) {
  return {key,
          [key, member](RunConfig& c, const std::string& v, const std::string& origin) {
            c.*member = static_cast<int>(parse_int(v, key, origin));
          },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"scene",
                 [](RunConfig& c, const std::string& v, const std::string&) { c.scene_path = v; },
                 [](const RunConfig& c) { return c.scene_path; }});
    f.push_back({"seed",
                 [](RunConfig& c, const std::string& v, const std::string& origin) {
                   c.seed = parse_uint(v, "seed", origin);
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    f.push_back(int_field("schedule.steps", &RunConfig::schedule_steps));
    f.push_back(real_field("schedule.beta_start", &RunConfig::beta_start));
    f.push_back(real_field("schedule.beta_end", &RunConfig::beta_end));
    f.push_back(int_field("model.patch_k", &RunConfig::patch_k));
    f.push_back(int_field("model.feature_dim", &RunConfig::feature_dim));
    f.push_back(int_field("predictor.token_dim", &RunConfig::predictor_token_dim));
    f.push_back(heads_field("predictor.n_heads", &RunConfig::predictor_heads));
    f.push_back(int_field("predictor.depth", &RunConfig::predictor_depth));
    f.push_back({"predictor.feature_timesteps",
                 [](RunConfig& c, const std::string& v, const std::string& origin) {
                   std::vector<int64_t> ts;
                   std::stringstream ss(v);
                   std::string item;
                   while (std::getline(ss, item, ','))
                     ts.push_back(parse_int(item, "predictor.feature_timesteps", origin));
                   if (ts.empty())
                     throw IoError(origin + ": field predictor.feature_timesteps is empty");
                   c.feature_timesteps = std::move(ts);
                 },
                 [](const RunConfig& c) {
                   std::string out;
                   for (size_t i = 0; i < c.feature_timesteps.size(); ++i) {
                     if (i) out += ",";
                     out += std::to_string(c.feature_timesteps[i]);
                   }
                   return out;
                 }});
    f.push_back(int_field("pretrain.epochs", &RunConfig::pretrain_epochs));
    f.push_back(int_field("pretrain.patches_per_epoch", &RunConfig::pretrain_patches));
    f.push_back(int_field("pretrain.batch_size", &RunConfig::pretrain_batch));
    f.push_back(real_field("pretrain.lr", &RunConfig::pretrain_lr));
    f.push_back(real_field("pretrain.weight_decay", &RunConfig::pretrain_weight_decay));
    f.push_back(int_field("encoder.chunk", &RunConfig::encoder_chunk));
    f.push_back(int_field("encoder.token_dim", &RunConfig::encoder_token_dim));
    f.push_back(heads_field("encoder.n_heads", &RunConfig::encoder_heads));
    f.push_back(int_field("encoder.depth", &RunConfig::encoder_depth));
    f.push_back(int_field("encoder.proj_dim", &RunConfig::proj_dim));
    f.push_back(real_field("encoder.tau", &RunConfig::tau));
    f.push_back(int_field("head.depth", &RunConfig::head_depth));
    f.push_back(heads_field("head.n_heads", &RunConfig::head_heads));
    f.push_back({"head.use_scdm",
                 [](RunConfig& c, const std::string& v, const std::string& origin) {
                   const int64_t flag = parse_int(v, "head.use_scdm", origin);
                   if (flag != 0 && flag != 1)
                     throw IoError(origin + ": field head.use_scdm must be 0 or 1, got " + v);
                   c.use_scdm = flag == 1;
                 },
                 [](const RunConfig& c) { return std::string(c.use_scdm ? "1" : "0"); }});
    f.push_back(int_field("train.epochs", &RunConfig::train_epochs));
    f.push_back(int_field("train.batch_size", &RunConfig::train_batch));
    f.push_back(int_field("train.contrastive_pairs", &RunConfig::contrastive_pairs));
    f.push_back(real_field("train.lr0", &RunConfig::lr0));
    f.push_back(real_field("train.lambda_con", &RunConfig::lambda_con));
    f.push_back(int_field("pseudo.block", &RunConfig::pseudo_block));
    f.push_back(int_field("pseudo.components", &RunConfig::pseudo_components));
    f.push_back(int_field("select.changed", &RunConfig::select_changed));
    f.push_back(int_field("select.unchanged", &RunConfig::select_unchanged));
    f.push_back(int_field("infer.batch_pixels", &RunConfig::infer_batch_pixels));
    return f;
  }();
  return table;
}

}  // namespace

RunConfig desk_profile() {
  RunConfig c;
  c.feature_dim = 16;
  c.predictor_token_dim = 32;
  c.predictor_heads = 4;
  c.predictor_depth = 2;
  c.pretrain_epochs = 20;
  c.pretrain_patches = 256;
  c.pretrain_batch = 32;
  c.pretrain_lr = 1e-3;
  c.encoder_token_dim = 16;
  c.encoder_heads = 2;
  c.encoder_depth = 1;
  c.proj_dim = 8;
  c.head_depth = 2;
  c.head_heads = 2;
  c.train_epochs = 10;
  c.train_batch = 16;
  c.contrastive_pairs = 16;
  c.select_changed = 600;
  c.select_unchanged = 600;
  return c;
}

void set_config_field(RunConfig& cfg, const std::string& key, const std::string& value,
                      const std::string& origin) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(cfg, value, origin);
      return;
    }
  }
  throw IoError(origin + ": unknown config field " + key);
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int64_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size())
      throw IoError(origin + ":" + std::to_string(lineno) + ": expected \"key value\", got \"" +
                    line + "\"");
    set_config_field(cfg, line.substr(0, sp), line.substr(sp + 1), origin);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string config_text(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) {
    const std::string v = f.get(cfg);
    if (v.empty()) continue;  // unset paths are omitted rather than written blank
    out += f.key;
    out += " ";
    out += v;
    out += "\n";
  }
  return out;
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create config file " + path);
  out << config_text(cfg);
  if (!out) throw IoError("write failed on " + path);
}

NoiseSchedule config_schedule(const RunConfig& cfg) {
  return make_linear_schedule(cfg.schedule_steps, cfg.beta_start, cfg.beta_end);
}

PredictorConfig predictor_config(const RunConfig& cfg, int64_t bands) {
  PredictorConfig pc;
  pc.bands = bands;
  pc.k = cfg.patch_k;
  pc.token_dim = cfg.predictor_token_dim;
  pc.n_heads = cfg.predictor_heads;
  pc.depth = cfg.predictor_depth;
  pc.feature_dim = cfg.feature_dim;
  pc.feature_timesteps = cfg.feature_timesteps;
  pc.validate();
  return pc;
}

PretrainConfig pretrain_config(const RunConfig& cfg) {
  PretrainConfig pt;
  pt.epochs = cfg.pretrain_epochs;
  pt.patches_per_epoch = cfg.pretrain_patches;
  pt.batch_size = cfg.pretrain_batch;
  pt.lr = cfg.pretrain_lr;
  pt.weight_decay = cfg.pretrain_weight_decay;
  return pt;
}

EncoderConfig encoder_config(const RunConfig& cfg, int64_t bands) {
  EncoderConfig ec;
  ec.bands = bands;
  ec.chunk = cfg.encoder_chunk;
  ec.token_dim = cfg.encoder_token_dim;
  ec.n_heads = cfg.encoder_heads;
  ec.depth = cfg.encoder_depth;
  ec.feature_dim = cfg.feature_dim;
  ec.proj_dim = cfg.proj_dim;
  ec.tau = cfg.tau;
  ec.validate();
  return ec;
}

HeadConfig head_config(const RunConfig& cfg) {
  HeadConfig hc;
  hc.feature_dim = cfg.feature_dim;
  hc.k = cfg.patch_k;
  hc.depth = cfg.head_depth;
  hc.n_heads = cfg.head_heads;
  hc.use_scdm = cfg.use_scdm;
  hc.validate();
  return hc;
}

Stage2Config stage2_config(const RunConfig& cfg, int64_t bands) {
  Stage2Config sc;
  sc.encoder = encoder_config(cfg, bands);
  sc.head = head_config(cfg);
  sc.epochs = cfg.train_epochs;
  sc.batch_size = cfg.train_batch;
  sc.contrastive_pairs = cfg.contrastive_pairs;
  sc.lr0 = cfg.lr0;
  sc.lambda_con = cfg.lambda_con;
  sc.feature_seed = cfg.seed;
  sc.validate();
  return sc;
}

InferConfig infer_config(const RunConfig& cfg) {
  InferConfig ic;
  ic.batch_pixels = cfg.infer_batch_pixels;
  ic.feature_seed = cfg.seed;
  return ic;
}

}  // namespace hscd
