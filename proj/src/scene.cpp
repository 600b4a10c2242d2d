#include "hscd/scene.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "scene containers are little-endian; byte swapping is not implemented");

namespace hscd {

namespace fs = std::filesystem;

void BitemporalScene::validate() const {
  require(bands > 0 && height > 0 && width > 0, "scene dimensions must be positive");
  const size_t n = static_cast<size_t>(bands * height * width);
  if (t1.size() != n)
    throw InvariantError("t1 has " + std::to_string(t1.size()) + " values, expected " +
                         std::to_string(n));
  if (t2.size() != n)
    throw InvariantError("t2 shape differs from t1: " + std::to_string(t2.size()) +
                         " values, expected " + std::to_string(n));
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(t1[i]))
      throw InvariantError("non-finite reflectance in t1 at flat index " + std::to_string(i));
    if (!std::isfinite(t2[i]))
      throw InvariantError("non-finite reflectance in t2 at flat index " + std::to_string(i));
  }
  if (!labels.empty()) {
    if (labels.size() != static_cast<size_t>(pixels()))
      throw InvariantError("labels cover " + std::to_string(labels.size()) + " pixels, expected " +
                           std::to_string(pixels()));
    for (size_t i = 0; i < labels.size(); ++i)
      if (labels[i] > 2)
        throw InvariantError("label value " + std::to_string(int(labels[i])) +
                             " at flat index " + std::to_string(i) + " is outside {0,1,2}");
  }
}

namespace {

std::map<std::string, std::string> parse_meta(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest " + file.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const size_t sp = line.find(' ');
    if (sp == std::string::npos)
      throw IoError(file.string() + ": malformed manifest line \"" + line + "\"");
    kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  return kv;
}

const std::string& meta_field(const std::map<std::string, std::string>& kv,
                              const std::string& key, const fs::path& file) {
  auto it = kv.find(key);
  if (it == kv.end()) throw IoError(file.string() + ": manifest missing field " + key);
  return it->second;
}

int64_t meta_int(const std::map<std::string, std::string>& kv, const std::string& key,
                 const fs::path& file) {
  const std::string& s = meta_field(kv, key, file);
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(s, &pos);
    if (pos != s.size() || v <= 0) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(file.string() + ": field " + key + " is not a positive integer: " + s);
  }
}

template <typename T>
std::vector<T> read_raw(const fs::path& file, size_t expected_count) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<size_t>(in.tellg());
  const size_t expected_bytes = expected_count * sizeof(T);
  if (bytes != expected_bytes)
    throw IoError(file.string() + ": expected " + std::to_string(expected_bytes) +
                  " bytes for the declared shape, found " + std::to_string(bytes));
  in.seekg(0);
  std::vector<T> data(expected_count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected_bytes));
  if (!in) throw IoError("short read on " + file.string());
  return data;
}

template <typename T>
void write_raw(const fs::path& file, const std::vector<T>& data) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + file.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
  if (!out) throw IoError("write failed on " + file.string());
}

}  // namespace

BitemporalScene load_scene(const std::string& path) {
  const fs::path dir(path);
  if (!fs::is_directory(dir)) throw IoError(path + " is not a scene directory");
  const fs::path meta = dir / "meta";
  auto kv = parse_meta(meta);

  const std::string& dtype = meta_field(kv, "dtype", meta);
  if (dtype != "float32") throw IoError(meta.string() + ": unsupported dtype " + dtype);
  const std::string& order = meta_field(kv, "byteorder", meta);
  if (order != "little-endian") throw IoError(meta.string() + ": unsupported byteorder " + order);

  BitemporalScene scene;
  scene.name = meta_field(kv, "name", meta);
  scene.bands = meta_int(kv, "C", meta);
  scene.height = meta_int(kv, "H", meta);
  scene.width = meta_int(kv, "W", meta);
  const std::string& has_labels = meta_field(kv, "has_labels", meta);
  if (has_labels != "0" && has_labels != "1")
    throw IoError(meta.string() + ": has_labels must be 0 or 1, got " + has_labels);

  const size_t n = static_cast<size_t>(scene.bands * scene.height * scene.width);
  scene.t1 = read_raw<float>(dir / "t1.raw", n);
  scene.t2 = read_raw<float>(dir / "t2.raw", n);
  if (has_labels == "1")
    scene.labels = read_raw<uint8_t>(dir / "labels.raw", static_cast<size_t>(scene.pixels()));

  scene.validate();
  return scene;
}

void save_scene(const BitemporalScene& scene, const std::string& path) {
  scene.validate();
  require(scene.name.find('\n') == std::string::npos, "scene name must be a single line");
  const fs::path dir(path);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + path + ": " + ec.message());

  std::ofstream meta(dir / "meta", std::ios::trunc);
  if (!meta) throw IoError("cannot create " + (dir / "meta").string());
  meta << "name " << scene.name << "\n"
       << "C " << scene.bands << "\n"
       << "H " << scene.height << "\n"
       << "W " << scene.width << "\n"
       << "dtype float32\n"
       << "byteorder little-endian\n"
       << "has_labels " << (scene.has_labels() ? 1 : 0) << "\n";
  if (!meta) throw IoError("write failed on " + (dir / "meta").string());
  meta.close();

  write_raw(dir / "t1.raw", scene.t1);
  write_raw(dir / "t2.raw", scene.t2);
  if (scene.has_labels()) write_raw(dir / "labels.raw", scene.labels);
}

namespace {

// Mirror index without repeating the edge sample: -1 -> 1, n -> n-2.
int64_t reflect(int64_t i, int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

}  // namespace

PatchBatch extract_patches(const BitemporalScene& scene, Phase phase,
                           const std::vector<std::pair<int64_t, int64_t>>& centers, int64_t k) {
  require(k > 0 && k % 2 == 1, "patch size must be odd, got " + std::to_string(k));
  require(k <= 2 * std::min(scene.height, scene.width) - 1,
          "patch size too large for reflect padding on this scene");

  PatchBatch batch;
  batch.count = static_cast<int64_t>(centers.size());
  batch.bands = scene.bands;
  batch.k = k;
  batch.phase = phase;
  batch.centers = centers;
  batch.patches.resize(static_cast<size_t>(batch.count * batch.patch_size()));

  const int64_t half = k / 2;
  const std::vector<float>& cube = phase == Phase::T1 ? scene.t1 : scene.t2;
  for (int64_t n = 0; n < batch.count; ++n) {
    const auto [cy, cx] = centers[static_cast<size_t>(n)];
    require(cy >= 0 && cy < scene.height && cx >= 0 && cx < scene.width,
            "patch center (" + std::to_string(cy) + "," + std::to_string(cx) +
                ") outside scene bounds");
    float* dst = batch.patch(n);
    for (int64_t c = 0; c < scene.bands; ++c) {
      const float* plane = cube.data() + static_cast<size_t>(c * scene.height * scene.width);
      for (int64_t dy = -half; dy <= half; ++dy) {
        const int64_t sy = reflect(cy + dy, scene.height);
        for (int64_t dx = -half; dx <= half; ++dx) {
          const int64_t sx = reflect(cx + dx, scene.width);
          *dst++ = plane[sy * scene.width + sx];
        }
      }
    }
  }

  if (scene.has_labels()) {
    bool all_known = true;
    for (const auto& [cy, cx] : centers)
      if (scene.label_at(cy, cx) == 2) {
        all_known = false;
        break;
      }
    if (all_known) {
      batch.labels.reserve(centers.size());
      for (const auto& [cy, cx] : centers) batch.labels.push_back(scene.label_at(cy, cx));
    }
  }
  return batch;
}

}  // namespace hscd
