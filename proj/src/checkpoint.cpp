#include "hscd/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "hscd/common.hpp"
#include "hscd/diffusion.hpp"
#include "hscd/textio.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoints are little-endian; byte swapping is not implemented");

namespace hscd {

namespace fs = std::filesystem;

using textio::fmt_double;
using textio::parse_double;
using textio::parse_int;

namespace {

constexpr int kFormatVersion = 1;

class Manifest {
 public:
  explicit Manifest(const fs::path& file) : file_(file.string()) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open manifest " + file_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const size_t sp = line.find(' ');
      if (sp == std::string::npos)
        throw IoError(file_ + ": malformed manifest line \"" + line + "\"");
      kv_[line.substr(0, sp)] = line.substr(sp + 1);
    }
  }

  const std::string& str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw IoError(file_ + ": manifest missing field " + key);
    return it->second;
  }
  int64_t integer(const std::string& key) const { return parse_int(str(key), key, file_); }
  double real(const std::string& key) const { return parse_double(str(key), key, file_); }
  const std::string& file() const { return file_; }

 private:
  std::string file_;
  std::map<std::string, std::string> kv_;
};

std::vector<int64_t> parse_int_list(const std::string& s, const std::string& field,
                                    const std::string& file) {
  std::vector<int64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(parse_int(item, field, file));
  if (out.empty()) throw IoError(file + ": field " + field + " is an empty list");
  return out;
}

std::string join_int_list(const std::vector<int64_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

void write_params(std::ostream& meta, const nn::ParamStore& ps, const fs::path& dir) {
  meta << "params " << ps.count() << "\n";
  for (int64_t i = 0; i < ps.count(); ++i)
    meta << "param" << i << " " << ps.entry(i).name << " " << ps.entry(i).value.size() << "\n";

  const std::vector<double> flat = ps.flatten();
  const fs::path raw = dir / "params.raw";
  std::ofstream out(raw, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + raw.string());
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!out) throw IoError("write failed on " + raw.string());
}

void read_params(const Manifest& m, nn::ParamStore& ps, const fs::path& dir) {
  const int64_t n = m.integer("params");
  if (n != ps.count())
    throw IoError(m.file() + ": manifest lists " + std::to_string(n) +
                  " parameters, the declared config builds " + std::to_string(ps.count()));
  for (int64_t i = 0; i < n; ++i) {
    const std::string key = "param" + std::to_string(i);
    const std::string& val = m.str(key);
    const size_t sp = val.rfind(' ');
    if (sp == std::string::npos)
      throw IoError(m.file() + ": field " + key + " is not \"name size\": " + val);
    const std::string name = val.substr(0, sp);
    const int64_t size = parse_int(val.substr(sp + 1), key, m.file());
    const auto& entry = ps.entry(i);
    if (entry.name != name)
      throw IoError(m.file() + ": parameter " + std::to_string(i) + " is " + name +
                    ", the declared config expects " + entry.name);
    if (entry.value.size() != size)
      throw IoError(m.file() + ": parameter " + name + " has " + std::to_string(size) +
                    " values, the declared config expects " + std::to_string(entry.value.size()));
  }

  const fs::path raw = dir / "params.raw";
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw IoError("cannot open " + raw.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<size_t>(in.tellg());
  const size_t expected = static_cast<size_t>(ps.total_size()) * sizeof(double);
  if (bytes != expected)
    throw IoError(raw.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                  std::to_string(bytes));
  in.seekg(0);
  std::vector<double> flat(static_cast<size_t>(ps.total_size()));
  in.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("short read on " + raw.string());
  ps.unflatten(flat);
}

std::ofstream open_manifest(const fs::path& dir, const std::string& kind) {
  fs::create_directories(dir);
  const fs::path meta = dir / "meta";
  std::ofstream out(meta, std::ios::trunc);
  if (!out) throw IoError("cannot create " + meta.string());
  out << "format hscd-checkpoint " << kFormatVersion << "\n";
  out << "kind " << kind << "\n";
  return out;
}

Manifest check_manifest(const fs::path& dir, const std::string& kind) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a checkpoint directory");
  Manifest m(dir / "meta");
  if (m.str("format") != "hscd-checkpoint " + std::to_string(kFormatVersion))
    throw IoError(m.file() + ": unsupported format " + m.str("format"));
  if (m.str("kind") != kind)
    throw IoError(m.file() + ": kind is " + m.str("kind") + ", expected " + kind);
  return m;
}

}  // namespace

void save_predictor(const PredictorState& st, const std::string& path) {
  const fs::path dir(path);
  std::ofstream meta = open_manifest(dir, "predictor");
  meta << "bands " << st.config.bands << "\n";
  meta << "k " << st.config.k << "\n";
  meta << "token_dim " << st.config.token_dim << "\n";
  meta << "n_heads " << st.config.n_heads << "\n";
  meta << "depth " << st.config.depth << "\n";
  meta << "feature_dim " << st.config.feature_dim << "\n";
  meta << "feature_timesteps " << join_int_list(st.config.feature_timesteps) << "\n";
  meta << "schedule_steps " << st.schedule_steps << "\n";
  meta << "beta_start " << fmt_double(st.beta_start) << "\n";
  meta << "beta_end " << fmt_double(st.beta_end) << "\n";
  write_params(meta, st.params, dir);
  if (!meta) throw IoError("write failed on " + (dir / "meta").string());
}

PredictorState load_predictor(const std::string& path) {
  const fs::path dir(path);
  const Manifest m = check_manifest(dir, "predictor");
  PredictorConfig cfg;
  cfg.bands = m.integer("bands");
  cfg.k = m.integer("k");
  cfg.token_dim = m.integer("token_dim");
  cfg.n_heads = static_cast<int>(m.integer("n_heads"));
  cfg.depth = m.integer("depth");
  cfg.feature_dim = m.integer("feature_dim");
  cfg.feature_timesteps = parse_int_list(m.str("feature_timesteps"), "feature_timesteps", m.file());
  const NoiseSchedule sched = make_linear_schedule(
      m.integer("schedule_steps"), m.real("beta_start"), m.real("beta_end"));
  Rng throwaway(0);  // every value is overwritten from the raw file
  PredictorState st = init_predictor(cfg, sched, throwaway);
  read_params(m, st.params, dir);
  return st;
}

void save_encoder(const EncoderState& st, const std::string& path) {
  const fs::path dir(path);
  std::ofstream meta = open_manifest(dir, "encoder");
  meta << "bands " << st.config.bands << "\n";
  meta << "chunk " << st.config.chunk << "\n";
  meta << "token_dim " << st.config.token_dim << "\n";
  meta << "n_heads " << st.config.n_heads << "\n";
  meta << "depth " << st.config.depth << "\n";
  meta << "feature_dim " << st.config.feature_dim << "\n";
  meta << "proj_dim " << st.config.proj_dim << "\n";
  meta << "tau " << fmt_double(st.config.tau) << "\n";
  write_params(meta, st.params, dir);
  if (!meta) throw IoError("write failed on " + (dir / "meta").string());
}

EncoderState load_encoder(const std::string& path) {
  const fs::path dir(path);
  const Manifest m = check_manifest(dir, "encoder");
  EncoderConfig cfg;
  cfg.bands = m.integer("bands");
  cfg.chunk = m.integer("chunk");
  cfg.token_dim = m.integer("token_dim");
  cfg.n_heads = static_cast<int>(m.integer("n_heads"));
  cfg.depth = m.integer("depth");
  cfg.feature_dim = m.integer("feature_dim");
  cfg.proj_dim = m.integer("proj_dim");
  cfg.tau = m.real("tau");
  Rng throwaway(0);
  EncoderState st = init_encoder(cfg, throwaway);
  read_params(m, st.params, dir);
  return st;
}

void save_head(const HeadState& st, const std::string& path) {
  const fs::path dir(path);
  std::ofstream meta = open_manifest(dir, "head");
  meta << "feature_dim " << st.config.feature_dim << "\n";
  meta << "k " << st.config.k << "\n";
  meta << "depth " << st.config.depth << "\n";
  meta << "n_heads " << st.config.n_heads << "\n";
  meta << "use_scdm " << (st.config.use_scdm ? 1 : 0) << "\n";
  write_params(meta, st.params, dir);
  if (!meta) throw IoError("write failed on " + (dir / "meta").string());
}

HeadState load_head(const std::string& path) {
  const fs::path dir(path);
  const Manifest m = check_manifest(dir, "head");
  HeadConfig cfg;
  cfg.feature_dim = m.integer("feature_dim");
  cfg.k = m.integer("k");
  cfg.depth = m.integer("depth");
  cfg.n_heads = static_cast<int>(m.integer("n_heads"));
  const int64_t flag = m.integer("use_scdm");
  if (flag != 0 && flag != 1)
    throw IoError(m.file() + ": field use_scdm must be 0 or 1, got " + std::to_string(flag));
  cfg.use_scdm = flag == 1;
  Rng throwaway(0);
  HeadState st = init_head(cfg, throwaway);
  read_params(m, st.params, dir);
  return st;
}

void save_change_map(const ChangeMap& map, const std::string& path) {
  require(map.height > 0 && map.width > 0, "change map dimensions must be positive");
  require(static_cast<int64_t>(map.decisions.size()) == map.height * map.width,
          "change map decisions do not cover H*W pixels");
  for (const uint8_t v : map.decisions)
    require(v <= 1, "change map decisions must be 0 or 1");
  const fs::path dir(path);
  fs::create_directories(dir);
  const fs::path meta = dir / "meta";
  std::ofstream out(meta, std::ios::trunc);
  if (!out) throw IoError("cannot create " + meta.string());
  out << "format hscd-map " << kFormatVersion << "\n";
  out << "name " << map.scene_name << "\n";
  out << "height " << map.height << "\n";
  out << "width " << map.width << "\n";
  if (!out) throw IoError("write failed on " + meta.string());
  out.close();

  const fs::path raw = dir / "map.raw";
  std::ofstream rawout(raw, std::ios::binary | std::ios::trunc);
  if (!rawout) throw IoError("cannot create " + raw.string());
  rawout.write(reinterpret_cast<const char*>(map.decisions.data()),
               static_cast<std::streamsize>(map.decisions.size()));
  if (!rawout) throw IoError("write failed on " + raw.string());
}

ChangeMap load_change_map(const std::string& path) {
  const fs::path dir(path);
  if (!fs::is_directory(dir)) throw IoError(path + " is not a change-map directory");
  const Manifest m(dir / "meta");
  if (m.str("format") != "hscd-map " + std::to_string(kFormatVersion))
    throw IoError(m.file() + ": unsupported format " + m.str("format"));
  ChangeMap map;
  map.scene_name = m.str("name");
  map.height = m.integer("height");
  map.width = m.integer("width");
  require(map.height > 0 && map.width > 0, "change map dimensions must be positive");

  const fs::path raw = dir / "map.raw";
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw IoError("cannot open " + raw.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<size_t>(in.tellg());
  const size_t expected = static_cast<size_t>(map.height * map.width);
  if (bytes != expected)
    throw IoError(raw.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                  std::to_string(bytes));
  in.seekg(0);
  map.decisions.resize(expected);
  in.read(reinterpret_cast<char*>(map.decisions.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("short read on " + raw.string());
  for (const uint8_t v : map.decisions)
    if (v > 1) throw IoError(raw.string() + ": decision values must be 0 or 1");
  return map;
}

}  // namespace hscd
