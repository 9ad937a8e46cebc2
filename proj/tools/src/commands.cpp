#include "tti/app/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "tti/app/config.hpp"
#include "tti/episodes.hpp"
#include "tti/errors.hpp"
#include "tti/fts.hpp"
#include "tti/metrics.hpp"
#include "tti/optimizer.hpp"
#include "tti/synthetic.hpp"

namespace tti::app {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

Tensor stack_masks(const std::vector<BinaryMask>& masks) {
  const auto& first = masks.front();
  std::vector<double> data;
  data.reserve(masks.size() * first.size());
  for (const auto& m : masks) {
    for (auto v : m.values()) data.push_back(v);
  }
  return Tensor({masks.size(), first.height(), first.width()}, std::move(data));
}

std::vector<BinaryMask> unstack_masks(const Tensor& t) {
  if (t.rank() == 2) return {tensor_to_mask(t)};
  if (t.rank() != 3) throw std::invalid_argument("mask sequences must be [N, H, W] or [H, W]");
  const std::size_t h = t.dims()[1];
  const std::size_t w = t.dims()[2];
  std::vector<BinaryMask> out;
  for (std::size_t f = 0; f < t.dims()[0]; ++f) {
    auto plane = t.values().subspan(f * h * w, h * w);
    out.push_back(tensor_to_mask(Tensor({h, w}, {plane.begin(), plane.end()})));
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os.flush()) throw std::runtime_error("write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json trace_to_json(const std::string& id, const OptimizationTrace& trace, Mode mode) {
  json j;
  j["episode"] = id;
  j["mode"] = to_string(mode);
  json lambdas = json::array();
  json loss = {{"ce", json::array()},
               {"entropy", json::array()},
               {"kl", json::array()},
               {"global", json::array()},
               {"total", json::array()}};
  for (const auto& r : trace.stage_one) {
    lambdas.push_back({r.lambdas.entropy, r.lambdas.kl, r.lambdas.global});
    loss["ce"].push_back(r.loss.ce);
    loss["entropy"].push_back(r.loss.entropy);
    loss["kl"].push_back(r.loss.kl);
    loss["global"].push_back(r.loss.global);
    loss["total"].push_back(r.loss.total);
  }
  j["lambdas"] = std::move(lambdas);
  j["loss"] = std::move(loss);
  json priors = json::array();
  for (const auto& p : trace.priors) priors.push_back(p.foreground);
  j["prior_foreground"] = std::move(priors);
  j["keyframe"] = trace.keyframe ? json(*trace.keyframe) : json(nullptr);
  json ce = json::array();
  for (const auto& r : trace.stage_two) ce.push_back(r.keyframe_ce);
  j["keyframe_ce"] = std::move(ce);
  j["stage_two_skipped"] = trace.stage_two_skipped;
  return j;
}

bool wants(const std::vector<std::string>& metrics, const char* name) {
  return std::find(metrics.begin(), metrics.end(), name) != metrics.end();
}

// Metric columns of one scored episode; windows that cannot be scored stay null.
json score(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt,
           const std::vector<std::string>& metrics, const std::vector<std::size_t>& windows) {
  json j = json::object();
  if (wants(metrics, "miou")) j["miou"] = mean_iou(pred, gt);
  if (wants(metrics, "vc")) {
    json vc = json::object();
    for (auto w : windows) {
      const auto key = std::to_string(w);
      if (w > pred.size()) {
        vc[key] = nullptr;
        continue;
      }
      vc[key] = optional_number(video_consistency(pred, gt, w).value);
    }
    j["vc"] = std::move(vc);
  }
  if (wants(metrics, "bf")) {
    double total = 0.0;
    for (std::size_t t = 0; t < pred.size(); ++t) total += boundary_f(pred[t], gt[t]);
    j["bf"] = total / static_cast<double>(pred.size());
  }
  return j;
}

std::string run_prefix(const std::string& id) { return id.substr(0, id.find('_')); }

std::string episode_name(std::size_t run, const std::string& name) {
  return "run" + std::to_string(run) + "_" + name;
}

std::string indexed(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04zu", prefix, i);
  return buf;
}

struct Job {
  std::size_t run = 0;
  std::size_t index = 0;
  std::string id;
  std::uint64_t seed = 0;
};

struct Outcome {
  json record;
  std::string error;
};

class EpisodeFactory {
 public:
  explicit EpisodeFactory(const RunConfig& cfg) : cfg_(cfg) {
    if (cfg.source.kind == SourceKind::kManifest) {
      manifest_ = load_manifest(cfg.source.path);
      if (cfg.source.fold >= manifest_.folds.size()) {
        throw ConfigError("source.fold " + std::to_string(cfg.source.fold) +
                          " is out of range (manifest has " +
                          std::to_string(manifest_.folds.size()) + " folds)");
      }
      if (manifest_.folds[cfg.source.fold].test.empty()) {
        throw ConfigError("fold " + std::to_string(cfg.source.fold) + " has no test classes");
      }
    } else if (cfg.source.kind == SourceKind::kEpisodeSet) {
      set_ = list_episode_set(cfg.source.path);
    }
  }

  std::vector<Job> jobs() const {
    std::vector<Job> out;
    const std::size_t per_run =
        cfg_.source.kind == SourceKind::kEpisodeSet ? set_.size() : cfg_.episodes;
    for (std::size_t r = 0; r < cfg_.runs; ++r) {
      for (std::size_t e = 0; e < per_run; ++e) {
        Job job{r, e, {}, episode_seed(cfg_.seed, r, e)};
        job.id = episode_name(r, cfg_.source.kind == SourceKind::kEpisodeSet
                                     ? set_[e].filename().string()
                                     : indexed("ep", e));
        out.push_back(std::move(job));
      }
    }
    return out;
  }

  Episode make(const Job& job) const {
    Episode ep;
    switch (cfg_.source.kind) {
      case SourceKind::kSynthetic: {
        SyntheticSpec spec = cfg_.source.synthetic;
        spec.seed = job.seed;
        ep = generate_synthetic(spec);
        break;
      }
      case SourceKind::kManifest: {
        const auto& classes = manifest_.folds[cfg_.source.fold].test;
        std::mt19937_64 rng(job.seed);
        const int cls = classes[std::uniform_int_distribution<std::size_t>(
            0, classes.size() - 1)(rng)];
        ep = sample_episode(manifest_, cfg_.source.fold, cls, cfg_.source.shots,
                            cfg_.source.frames, job.seed);
        break;
      }
      case SourceKind::kEpisodeSet:
        ep = read_episode(set_[job.index]);
        break;
    }
    ep.id = job.id;
    return ep;
  }

 private:
  const RunConfig& cfg_;
  DatasetManifest manifest_;
  std::vector<fs::path> set_;
};

Outcome run_one(const Job& job, const EpisodeFactory& factory, const RunConfig& cfg) {
  Outcome o;
  o.record["episode"] = job.id;
  o.record["run"] = job.run;
  o.record["seed"] = job.seed;
  o.record["mode"] = to_string(cfg.tti.mode);
  try {
    const Episode ep = factory.make(job);
    const auto result = run_episode(ep, cfg.tti);

    fts::write_tensor(stack_masks(result.masks), cfg.output / "pred" / (job.id + ".fts"));
    write_text(cfg.output / "trace" / (job.id + ".json"),
               trace_to_json(job.id, result.trace, cfg.tti.mode).dump(1) + "\n");

    o.record["status"] = "ok";
    o.record["frames"] = ep.query.size();
    o.record["class"] = ep.class_id;
    if (ep.has_ground_truth()) {
      fts::write_tensor(stack_masks(ep.ground_truth), cfg.output / "gt" / (job.id + ".fts"));
      o.record["metrics"] = score(result.masks, ep.ground_truth, cfg.metrics, cfg.windows);
    } else {
      o.record["metrics"] = nullptr;
    }
    o.record["keyframe"] =
        result.trace.keyframe ? json(*result.trace.keyframe) : json(nullptr);
    o.record["final_loss"] =
        result.trace.stage_one.empty() ? json(nullptr) : json(result.trace.stage_one.back().loss.total);
  } catch (const std::exception& e) {
    o.record["status"] = "error";
    o.record["error"] = e.what();
    o.error = e.what();
  }
  return o;
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  std::optional<EpisodeFactory> factory;
  try {
    cfg = load_run_config(args.config);
    if (args.out) cfg.output = *args.out;
    if (args.mode) cfg.tti.mode = parse_mode(*args.mode);
    if (args.seed) cfg.seed = *args.seed;
    if (args.workers) cfg.workers = *args.workers;
    cfg.validate();
    if (cfg.output.empty()) throw ConfigError("output directory is not set (use --out or \"output\")");
    for (const char* sub : {"pred", "gt", "trace"}) fs::create_directories(cfg.output / sub);
    factory.emplace(cfg);
  } catch (const std::exception& e) {
    err << "run: " << e.what() << "\n";
    return kExitUsage;
  }

  const auto jobs = factory->jobs();
  std::vector<Outcome> outcomes(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      outcomes[i] = run_one(jobs[i], *factory, cfg);
    }
  };
  const std::size_t n_workers = std::min(cfg.workers, std::max<std::size_t>(jobs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::string results;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    results += outcomes[i].record.dump() + "\n";
    if (!outcomes[i].error.empty()) {
      ++failed;
      err << "run: episode " << jobs[i].id << " failed: " << outcomes[i].error << "\n";
    }
  }
  try {
    write_text(cfg.output / "results.jsonl", results);
  } catch (const std::exception& e) {
    err << "run: " << e.what() << "\n";
    return kExitUsage;
  }
  out << "ran " << jobs.size() << " episodes (" << failed << " failed), mode "
      << to_string(cfg.tti.mode) << ", results in " << (cfg.output / "results.jsonl").string()
      << "\n";
  return failed == 0 ? kExitOk : kExitPartial;
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  for (const auto& m : args.metrics) {
    if (m != "miou" && m != "vc" && m != "bf") {
      err << "eval: unknown metric '" << m << "' (expected miou, vc, bf)\n";
      return kExitUsage;
    }
  }
  for (auto w : args.windows) {
    if (w < 2) {
      err << "eval: every VC window must be >= 2\n";
      return kExitUsage;
    }
  }
  if (!fs::is_directory(args.pred)) {
    err << "eval: prediction directory " << args.pred.string() << " does not exist\n";
    return kExitUsage;
  }
  const fs::path out_dir = args.out.value_or(args.pred);

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(args.pred)) {
    if (entry.is_regular_file() && entry.path().extension() == ".fts") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  // Column order: miou, vc<w>..., bf.
  std::vector<std::string> columns;
  if (wants(args.metrics, "miou")) columns.push_back("miou");
  if (wants(args.metrics, "vc")) {
    for (auto w : args.windows) columns.push_back("vc" + std::to_string(w));
  }
  if (wants(args.metrics, "bf")) columns.push_back("bf");

  // run -> column -> per-episode values
  std::map<std::string, std::map<std::string, std::vector<double>>> by_run;
  std::string rows = "episode";
  for (const auto& c : columns) rows += "\t" + c;
  rows += "\n";
  std::size_t failed = 0;
  std::size_t scored = 0;

  for (const auto& file : files) {
    const std::string id = file.stem().string();
    try {
      const fs::path gt_file = args.gt / file.filename();
      if (!fs::exists(gt_file)) throw std::runtime_error("missing ground truth " + gt_file.string());
      const auto pred = unstack_masks(fts::read_tensor(file));
      const auto gt = unstack_masks(fts::read_tensor(gt_file));
      if (pred.size() != gt.size() || pred.front().height() != gt.front().height() ||
          pred.front().width() != gt.front().width()) {
        throw std::runtime_error("prediction and ground truth shapes differ");
      }
      const json s = score(pred, gt, args.metrics, args.windows);
      auto& cols = by_run[run_prefix(id)];
      rows += id;
      for (const auto& c : columns) {
        json v;
        if (c == "miou" || c == "bf") {
          v = s[c];
        } else {
          v = s["vc"][c.substr(2)];
        }
        if (v.is_null()) {
          rows += "\tnan";
        } else {
          cols[c].push_back(v.get<double>());
          char buf[32];
          std::snprintf(buf, sizeof(buf), "\t%.6f", v.get<double>());
          rows += buf;
        }
      }
      rows += "\n";
      ++scored;
    } catch (const std::exception& e) {
      ++failed;
      err << "eval: episode " << id << ": " << e.what() << "\n";
    }
  }

  // Per-column: mean within each run, then mean and sample spread across runs.
  struct Summary {
    double mean = std::nan("");
    double spread = std::nan("");
    std::size_t runs = 0;
  };
  std::map<std::string, Summary> summary;
  for (const auto& c : columns) {
    std::vector<double> run_means;
    for (const auto& [run, cols] : by_run) {
      auto it = cols.find(c);
      if (it == cols.end() || it->second.empty()) continue;
      double s = 0.0;
      for (double v : it->second) s += v;
      run_means.push_back(s / static_cast<double>(it->second.size()));
    }
    Summary sm;
    sm.runs = run_means.size();
    if (!run_means.empty()) {
      double s = 0.0;
      for (double v : run_means) s += v;
      sm.mean = s / static_cast<double>(run_means.size());
      double ss = 0.0;
      for (double v : run_means) ss += (v - sm.mean) * (v - sm.mean);
      sm.spread = run_means.size() > 1 ? std::sqrt(ss / static_cast<double>(run_means.size() - 1)) : 0.0;
    }
    summary[c] = sm;
  }

  char line[128];
  std::snprintf(line, sizeof(line), "%-8s %10s %10s %6s\n", "metric", "mean", "spread", "runs");
  out << line;
  for (const auto& c : columns) {
    const auto& s = summary[c];
    std::snprintf(line, sizeof(line), "%-8s %10.4f %10.4f %6zu\n", c.c_str(), s.mean, s.spread,
                  s.runs);
    out << line;
  }
  out << "scored " << scored << " episodes, " << failed << " failed\n";

  try {
    fs::create_directories(out_dir);
    write_text(out_dir / "episodes.tsv", rows);
    if (wants(args.metrics, "vc")) {
      std::string curve = "window\tvc_mean\tvc_spread\n";
      for (auto w : args.windows) {
        const auto& s = summary["vc" + std::to_string(w)];
        std::snprintf(line, sizeof(line), "%zu\t%.6f\t%.6f\n", w, s.mean, s.spread);
        curve += line;
      }
      write_text(out_dir / "vc_curve.tsv", curve);
    }
  } catch (const std::exception& e) {
    err << "eval: " << e.what() << "\n";
    return kExitUsage;
  }
  return failed == 0 ? kExitOk : kExitPartial;
}

int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
  try {
    SyntheticSpec spec = load_synthetic_spec(args.spec);
    std::vector<Episode> episodes;
    for (std::size_t i = 0; i < args.count; ++i) {
      spec.seed = episode_seed(args.seed, 0, i);
      Episode ep = generate_synthetic(spec);
      ep.id = indexed("synth_", i);
      episodes.push_back(std::move(ep));
    }
    write_episode_set(episodes, args.out);
  } catch (const std::exception& e) {
    err << "synth: " << e.what() << "\n";
    return kExitUsage;
  }
  out << "wrote " << args.count << " episodes to " << args.out.string() << "\n";
  return kExitOk;
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err) {
  if (options.instances == 0) {
    err << "gradcheck: instance list is empty (need --instances >= 1)\n";
    return kExitUsage;
  }
  GradcheckReport report;
  try {
    report = run_gradcheck(options);
  } catch (const std::exception& e) {
    err << "gradcheck: " << e.what() << "\n";
    return kExitUsage;
  }
  char line[160];
  std::snprintf(line, sizeof(line), "%-18s %14s %9s %11s %8s  %s\n", "loss", "max_rel_error",
                "instance", "coordinate", "checked", "status");
  out << line;
  auto print = [&](const GradcheckRow& r) {
    std::snprintf(line, sizeof(line), "%-18s %14.3e %9zu %11zu %8zu  %s\n", r.loss.c_str(),
                  r.max_relative_error, r.instance, r.coordinate, r.checked,
                  r.passed ? "ok" : "FAIL");
    out << line;
  };
  for (const auto& r : report.gradients) print(r);
  print(report.contrastive_value);

  bool ok = true;
  for (const auto* r : {&report.gradients[0], &report.gradients[1], &report.gradients[2],
                        &report.gradients[3], &report.gradients[4], &report.contrastive_value}) {
    if (!r->passed) {
      ok = false;
      err << "gradcheck: " << r->loss << " exceeds tolerance " << options.tolerance
          << " (relative error " << r->max_relative_error << " at instance " << r->instance
          << ", coordinate " << r->coordinate << ")\n";
    }
  }
  return ok ? kExitOk : kExitNumeric;
}

}  // namespace tti::app
