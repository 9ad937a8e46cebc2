#include "tti/app/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tti/errors.hpp"

namespace tti::app {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

json parse_text(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TtiConfig parse_tti(const json& j) {
  const std::string where = "tti";
  reject_unknown(j,
                 {"iterations", "prior_update_iteration", "learning_rate", "temperature",
                  "contrastive_temperature", "refinement_iterations", "negative_distance",
                  "positive_confidence", "mode", "global_loss", "keyframe_refinement",
                  "couple_global_prototype", "stage_two_scope", "initial_prediction_bias",
                  "binarize_threshold", "record_parameters"},
                 where);
  TtiConfig c;
  read(j, "iterations", c.iterations, where);
  read(j, "prior_update_iteration", c.prior_update_iteration, where);
  read(j, "learning_rate", c.learning_rate, where);
  read(j, "temperature", c.temperature, where);
  read(j, "contrastive_temperature", c.contrastive_temperature, where);
  read(j, "refinement_iterations", c.refinement_iterations, where);
  read(j, "negative_distance", c.negative_distance, where);
  read(j, "positive_confidence", c.positive_confidence, where);
  if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
  read(j, "global_loss", c.global_loss, where);
  read(j, "keyframe_refinement", c.keyframe_refinement, where);
  read(j, "couple_global_prototype", c.couple_global_prototype, where);
  if (j.contains("stage_two_scope")) {
    c.stage_two_scope = parse_stage_two_scope(j.at("stage_two_scope").get<std::string>());
  }
  read(j, "initial_prediction_bias", c.initial_prediction_bias, where);
  read(j, "binarize_threshold", c.binarize_threshold, where);
  read(j, "record_parameters", c.record_parameters, where);
  return c;
}

SyntheticSpec synthetic_from_json(const json& j) {
  const std::string where = "synthetic spec";
  reject_unknown(j,
                 {"channels", "height", "width", "frames", "shots", "direction", "drift",
                  "area_fractions", "area_fraction_range", "support_area_fraction", "noise",
                  "motion", "background_directions", "background_overlap", "seed"},
                 where);
  SyntheticSpec s;
  read(j, "channels", s.channels, where);
  read(j, "height", s.height, where);
  read(j, "width", s.width, where);
  read(j, "frames", s.frames, where);
  read(j, "shots", s.shots, where);
  read(j, "direction", s.direction, where);
  read(j, "drift", s.drift, where);
  read(j, "area_fractions", s.area_fractions, where);
  if (j.contains("area_fraction_range")) {
    std::vector<double> r;
    read(j, "area_fraction_range", r, where);
    if (r.size() != 2) throw ConfigError(where + ".area_fraction_range: expected [lo, hi]");
    s.area_fraction_range = std::make_pair(r[0], r[1]);
  }
  read(j, "support_area_fraction", s.support_area_fraction, where);
  read(j, "noise", s.noise, where);
  read(j, "motion", s.motion, where);
  read(j, "background_directions", s.background_directions, where);
  read(j, "background_overlap", s.background_overlap, where);
  read(j, "seed", s.seed, where);
  s.validate();
  return s;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

void RunConfig::validate() const {
  tti.validate();
  if (runs == 0) throw ConfigError("runs must be >= 1");
  if (workers == 0) throw ConfigError("workers must be >= 1");
  for (std::size_t w : windows) {
    if (w < 2) throw ConfigError("every VC window must be >= 2");
  }
  for (const auto& m : metrics) {
    if (m != "miou" && m != "vc" && m != "bf") {
      throw ConfigError("unknown metric '" + m + "' (expected miou, vc, bf)");
    }
  }
  if (source.kind == SourceKind::kSynthetic) source.synthetic.validate();
  if (source.kind == SourceKind::kManifest && (source.shots == 0 || source.frames == 0)) {
    throw ConfigError("manifest source needs shots >= 1 and frames >= 1");
  }
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  const json j = parse_text(text, "run config");
  const std::string where = "run config";
  reject_unknown(j,
                 {"tti", "source", "output", "runs", "episodes", "seed", "metrics", "windows",
                  "workers"},
                 where);
  RunConfig c;
  if (j.contains("tti")) c.tti = parse_tti(j.at("tti"));
  read(j, "runs", c.runs, where);
  read(j, "episodes", c.episodes, where);
  read(j, "seed", c.seed, where);
  read(j, "metrics", c.metrics, where);
  read(j, "windows", c.windows, where);
  read(j, "workers", c.workers, where);
  if (j.contains("output")) c.output = resolve(base_dir, j.at("output").get<std::string>());

  if (!j.contains("source")) throw ConfigError("run config: missing 'source'");
  const json& s = j.at("source");
  const std::string sw = "source";
  reject_unknown(s, {"type", "spec", "spec_path", "path", "fold", "shots", "frames"}, sw);
  std::string type = "synthetic";
  read(s, "type", type, sw);
  if (type == "synthetic") {
    c.source.kind = SourceKind::kSynthetic;
    if (s.contains("spec")) {
      c.source.synthetic = synthetic_from_json(s.at("spec"));
    } else if (s.contains("spec_path")) {
      c.source.synthetic =
          load_synthetic_spec(resolve(base_dir, s.at("spec_path").get<std::string>()));
    } else {
      throw ConfigError("synthetic source needs 'spec' or 'spec_path'");
    }
  } else if (type == "manifest") {
    c.source.kind = SourceKind::kManifest;
    if (!s.contains("path")) throw ConfigError("manifest source needs 'path'");
    c.source.path = resolve(base_dir, s.at("path").get<std::string>());
    read(s, "fold", c.source.fold, sw);
    read(s, "shots", c.source.shots, sw);
    read(s, "frames", c.source.frames, sw);
  } else if (type == "episodes") {
    c.source.kind = SourceKind::kEpisodeSet;
    if (!s.contains("path")) throw ConfigError("episodes source needs 'path'");
    c.source.path = resolve(base_dir, s.at("path").get<std::string>());
  } else {
    throw ConfigError("source.type must be synthetic, manifest or episodes (got '" + type + "')");
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  return parse_run_config(slurp(path), path.parent_path());
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  return synthetic_from_json(parse_text(text, "synthetic spec"));
}

SyntheticSpec load_synthetic_spec(const fs::path& path) {
  return parse_synthetic_spec(slurp(path));
}

std::uint64_t episode_seed(std::uint64_t base, std::size_t run, std::size_t index) {
  // splitmix64 over a packed (run, index) counter
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * ((static_cast<std::uint64_t>(run) << 32) +
                                                    static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace tti::app
