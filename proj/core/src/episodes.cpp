#include "tti/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "tti/errors.hpp"
#include "tti/fts.hpp"

namespace tti {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": field '" + key + "': " + e.what());
  }
}

std::vector<fs::path> to_paths(const std::vector<std::string>& v) {
  return {v.begin(), v.end()};
}

std::vector<std::string> to_strings(const std::vector<fs::path>& v) {
  std::vector<std::string> out;
  for (const auto& p : v) out.push_back(p.generic_string());
  return out;
}

FrameFeatures load_features(const fs::path& path) {
  Tensor t = fts::read_tensor(path);
  if (t.rank() != 3) throw ConfigError(path.string() + ": feature tensor must be [C, H, W]");
  return FrameFeatures(std::move(t));
}

std::string numbered(const char* prefix, std::size_t i, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%02zu%s", prefix, i, suffix);
  return buf;
}

}  // namespace

bool VideoRecord::contains(int class_id) const {
  return std::find(classes.begin(), classes.end(), class_id) != classes.end();
}

fs::path DatasetManifest::resolve(const fs::path& p) const {
  return p.is_absolute() ? p : root / p;
}

void validate_manifest(const DatasetManifest& m, bool check_files) {
  if (m.format_version != kManifestVersion) {
    throw ConfigError("unsupported manifest format_version " + std::to_string(m.format_version));
  }
  std::set<std::string> ids;
  for (const auto& v : m.videos) {
    if (!ids.insert(v.id).second) throw ConfigError("duplicate video id '" + v.id + "'");
    if (v.frame_count == 0) throw ConfigError("video '" + v.id + "' has no frames");
    if (v.features.size() != v.frame_count || v.masks.size() != v.frame_count) {
      throw ConfigError("video '" + v.id + "': frame_count does not match file lists");
    }
    if (check_files) {
      for (const auto* list : {&v.features, &v.masks}) {
        for (const auto& p : *list) {
          if (!fs::exists(m.resolve(p))) {
            throw ConfigError("video '" + v.id + "': missing file " + m.resolve(p).string());
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < m.folds.size(); ++i) {
    const auto& f = m.folds[i];
    for (int c : f.test) {
      if (std::find(f.train.begin(), f.train.end(), c) != f.train.end()) {
        throw ConfigError("fold " + std::to_string(i) + ": class " + std::to_string(c) +
                          " is in both train and test splits");
      }
    }
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  const json j = read_json(path);
  const std::string where = path.string();
  DatasetManifest m;
  m.root = path.parent_path();
  m.format_version = field<int>(j, "format_version", where);
  m.channels = j.value("channels", std::size_t{0});
  for (const auto& jv : field<json>(j, "videos", where)) {
    VideoRecord v;
    v.id = field<std::string>(jv, "id", where);
    const std::string vw = where + " video '" + v.id + "'";
    v.frame_count = field<std::size_t>(jv, "frame_count", vw);
    v.features = to_paths(field<std::vector<std::string>>(jv, "features", vw));
    v.masks = to_paths(field<std::vector<std::string>>(jv, "masks", vw));
    v.classes = field<std::vector<int>>(jv, "classes", vw);
    m.videos.push_back(std::move(v));
  }
  for (const auto& jf : field<json>(j, "folds", where)) {
    Fold f;
    f.train = field<std::vector<int>>(jf, "train", where);
    f.val = jf.value("val", std::vector<int>{});
    f.test = field<std::vector<int>>(jf, "test", where);
    m.folds.push_back(std::move(f));
  }
  validate_manifest(m, true);
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  json j;
  j["format_version"] = m.format_version;
  j["channels"] = m.channels;
  j["videos"] = json::array();
  for (const auto& v : m.videos) {
    j["videos"].push_back({{"id", v.id},
                           {"frame_count", v.frame_count},
                           {"features", to_strings(v.features)},
                           {"masks", to_strings(v.masks)},
                           {"classes", v.classes}});
  }
  j["folds"] = json::array();
  for (const auto& f : m.folds) {
    j["folds"].push_back({{"train", f.train}, {"val", f.val}, {"test", f.test}});
  }
  write_json(j, path);
}

BinaryMask binarize_labels(const Tensor& labels, int class_id) {
  if (labels.rank() != 2) throw std::invalid_argument("mask tensors must be [H, W]");
  std::vector<std::uint8_t> v(labels.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = std::lround(labels[i]) == class_id ? 1 : 0;
  }
  return BinaryMask(labels.dims()[0], labels.dims()[1], std::move(v));
}

Episode sample_episode(const DatasetManifest& m, std::size_t fold, int class_id,
                       std::size_t shots, std::size_t frames, std::uint64_t seed) {
  if (shots == 0 || frames == 0) throw SamplingError("K and N_v must both be >= 1");
  if (fold >= m.folds.size()) throw SamplingError("fold " + std::to_string(fold) + " does not exist");
  const auto& test = m.folds[fold].test;
  if (std::find(test.begin(), test.end(), class_id) == test.end()) {
    throw SamplingError("class " + std::to_string(class_id) + " is not in the test split of fold " +
                        std::to_string(fold));
  }

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < m.videos.size(); ++i) {
    if (m.videos[i].contains(class_id) && m.videos[i].frame_count >= frames) eligible.push_back(i);
  }
  if (eligible.empty()) {
    throw SamplingError("no video contains class " + std::to_string(class_id) + " with at least " +
                        std::to_string(frames) + " frames");
  }

  std::mt19937_64 rng(seed);
  const std::size_t qi =
      eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)];
  const VideoRecord& qv = m.videos[qi];
  const std::size_t start =
      std::uniform_int_distribution<std::size_t>(0, qv.frame_count - frames)(rng);

  // Support candidates come from every other video whose frame mask shows the class.
  struct Candidate {
    std::size_t video;
    std::size_t frame;
  };
  std::vector<Candidate> pool;
  for (std::size_t i = 0; i < m.videos.size(); ++i) {
    if (i == qi || !m.videos[i].contains(class_id)) continue;
    for (std::size_t f = 0; f < m.videos[i].frame_count; ++f) {
      const auto labels = fts::read_tensor(m.resolve(m.videos[i].masks[f]));
      if (binarize_labels(labels, class_id).count() > 0) pool.push_back({i, f});
    }
  }
  if (pool.size() < shots) {
    throw SamplingError("support must come from videos other than the query video '" + qv.id +
                        "': found " + std::to_string(pool.size()) + " frames, need " +
                        std::to_string(shots));
  }
  for (std::size_t k = 0; k < shots; ++k) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(k, pool.size() - 1)(rng);
    std::swap(pool[k], pool[j]);
  }

  Episode ep;
  ep.class_id = class_id;
  ep.seed = seed;
  ep.id = qv.id + "@" + std::to_string(start) + "_c" + std::to_string(class_id) + "_s" +
          std::to_string(seed);
  for (std::size_t k = 0; k < shots; ++k) {
    const auto& v = m.videos[pool[k].video];
    ep.support.push_back({load_features(m.resolve(v.features[pool[k].frame])),
                          binarize_labels(fts::read_tensor(m.resolve(v.masks[pool[k].frame])),
                                          class_id)});
  }
  for (std::size_t t = start; t < start + frames; ++t) {
    ep.query.push_back(load_features(m.resolve(qv.features[t])));
    ep.ground_truth.push_back(binarize_labels(fts::read_tensor(m.resolve(qv.masks[t])), class_id));
  }
  return ep;
}

Tensor mask_to_tensor(const BinaryMask& mask) {
  std::vector<double> v(mask.values().begin(), mask.values().end());
  return Tensor({mask.height(), mask.width()}, std::move(v));
}

BinaryMask tensor_to_mask(const Tensor& tensor) {
  if (tensor.rank() != 2) throw std::invalid_argument("mask tensors must be [H, W]");
  std::vector<std::uint8_t> v(tensor.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (tensor[i] != 0.0 && tensor[i] != 1.0) {
      throw std::invalid_argument("binary mask tensor holds a value other than 0 or 1");
    }
    v[i] = tensor[i] != 0.0 ? 1 : 0;
  }
  return BinaryMask(tensor.dims()[0], tensor.dims()[1], std::move(v));
}

void write_episode(const Episode& ep, const fs::path& dir) {
  fs::create_directories(dir);
  json j;
  j["id"] = ep.id;
  j["class_id"] = ep.class_id;
  j["seed"] = ep.seed;
  j["support"] = json::array();
  for (std::size_t k = 0; k < ep.support.size(); ++k) {
    const auto feat = numbered("support_", k, "_features.fts");
    const auto mask = numbered("support_", k, "_mask.fts");
    fts::write_tensor(ep.support[k].features.tensor(), dir / feat);
    fts::write_tensor(mask_to_tensor(ep.support[k].mask), dir / mask);
    j["support"].push_back({{"features", feat}, {"mask", mask}});
  }
  j["query"] = json::array();
  for (std::size_t t = 0; t < ep.query.size(); ++t) {
    const auto name = numbered("query_", t, ".fts");
    fts::write_tensor(ep.query[t].tensor(), dir / name);
    j["query"].push_back(name);
  }
  j["ground_truth"] = json::array();
  for (std::size_t t = 0; t < ep.ground_truth.size(); ++t) {
    const auto name = numbered("gt_", t, ".fts");
    fts::write_tensor(mask_to_tensor(ep.ground_truth[t]), dir / name);
    j["ground_truth"].push_back(name);
  }
  write_json(j, dir / "episode.json");
}

Episode read_episode(const fs::path& dir) {
  const json j = read_json(dir / "episode.json");
  const std::string where = (dir / "episode.json").string();
  Episode ep;
  ep.id = field<std::string>(j, "id", where);
  ep.class_id = j.value("class_id", 0);
  ep.seed = j.value("seed", std::uint64_t{0});
  for (const auto& s : field<json>(j, "support", where)) {
    ep.support.push_back(
        {load_features(dir / field<std::string>(s, "features", where)),
         tensor_to_mask(fts::read_tensor(dir / field<std::string>(s, "mask", where)))});
  }
  for (const auto& q : field<std::vector<std::string>>(j, "query", where)) {
    ep.query.push_back(load_features(dir / q));
  }
  for (const auto& g : j.value("ground_truth", std::vector<std::string>{})) {
    ep.ground_truth.push_back(tensor_to_mask(fts::read_tensor(dir / g)));
  }
  if (ep.support.empty() || ep.query.empty()) {
    throw ConfigError(where + ": episode needs at least one support shot and one query frame");
  }
  if (!ep.ground_truth.empty() && ep.ground_truth.size() != ep.query.size()) {
    throw ConfigError(where + ": ground truth count differs from query frame count");
  }
  return ep;
}

void write_episode_set(const std::vector<Episode>& episodes, const fs::path& dir) {
  fs::create_directories(dir);
  json j;
  j["format_version"] = kManifestVersion;
  j["kind"] = "episode_set";
  j["episodes"] = json::array();
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "episode_%04zu", i);
    write_episode(episodes[i], dir / name);
    j["episodes"].push_back(name);
  }
  write_json(j, dir / "manifest.json");
}

std::vector<fs::path> list_episode_set(const fs::path& dir) {
  const json j = read_json(dir / "manifest.json");
  const std::string where = (dir / "manifest.json").string();
  if (j.value("kind", std::string{}) != "episode_set") {
    throw ConfigError(where + ": not an episode-set manifest");
  }
  std::vector<fs::path> out;
  for (const auto& name : field<std::vector<std::string>>(j, "episodes", where)) {
    out.push_back(dir / name);
  }
  return out;
}

}  // namespace tti
