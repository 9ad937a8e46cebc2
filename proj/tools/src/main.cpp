#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "tti/app/commands.hpp"

namespace {

std::vector<std::size_t> parse_sizes(const std::vector<std::string>& items) {
  std::vector<std::size_t> out;
  for (const auto& s : items) out.push_back(std::stoul(s));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace tti::app;
  CLI::App app{"Temporal transductive inference for few-shot video segmentation"};
  app.require_subcommand(1);

  RunArgs run;
  std::string run_out, run_mode;
  std::uint64_t run_seed = 0;
  std::size_t run_workers = 1;
  auto* run_cmd = app.add_subcommand("run", "Run inference over the configured episodes");
  run_cmd->add_option("--config", run.config, "Run configuration (JSON)")->required();
  auto* out_opt = run_cmd->add_option("--out", run_out, "Output directory (overrides config)");
  auto* mode_opt = run_cmd->add_option("--mode", run_mode, "tti | baseline | naive");
  auto* seed_opt = run_cmd->add_option("--seed", run_seed, "Base seed (overrides config)");
  auto* workers_opt = run_cmd->add_option("--workers", run_workers, "Worker threads");

  EvalArgs eval;
  std::string metrics = "miou,vc", windows = "3", eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Score predicted masks against ground truth");
  eval_cmd->add_option("--pred", eval.pred, "Directory of predicted mask files")->required();
  eval_cmd->add_option("--gt", eval.gt, "Directory of ground-truth mask files")->required();
  eval_cmd->add_option("--metrics", metrics, "Comma list of miou, vc, bf")->capture_default_str();
  eval_cmd->add_option("--windows", windows, "Comma list of VC windows")->capture_default_str();
  auto* eval_out_opt = eval_cmd->add_option("--out", eval_out, "Where to write tables (default: --pred)");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic episode set");
  synth_cmd->add_option("--spec", synth.spec, "Synthetic spec (JSON)")->required();
  synth_cmd->add_option("--count", synth.count, "Number of episodes")->required();
  synth_cmd->add_option("--seed", synth.seed, "Base seed");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  GradcheckOptions grad;
  std::string sizes = "8,6,6,4,2";
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
  grad_cmd->add_option("--seed", grad.seed, "Seed of the first instance");
  grad_cmd->add_option("--instances", grad.instances, "Number of random instances")
      ->capture_default_str();
  grad_cmd->add_option("--sizes", sizes, "C,H,W,N_v,K")->capture_default_str();
  grad_cmd->add_option("--inject-fault", grad.inject_fault,
                       "Flip the sign of one analytic gradient (ce, entropy, kl, global, "
                       "combined, contrastive)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run_cmd) {
      if (*out_opt) run.out = run_out;
      if (*mode_opt) run.mode = run_mode;
      if (*seed_opt) run.seed = run_seed;
      if (*workers_opt) run.workers = run_workers;
      return cmd_run(run, std::cout, std::cerr);
    }
    if (*eval_cmd) {
      eval.metrics = split_list(metrics);
      eval.windows = parse_sizes(split_list(windows));
      if (*eval_out_opt) eval.out = eval_out;
      return cmd_eval(eval, std::cout, std::cerr);
    }
    if (*synth_cmd) return cmd_synth(synth, std::cout, std::cerr);
    if (*grad_cmd) {
      const auto s = parse_sizes(split_list(sizes));
      if (s.size() != 5) {
        std::cerr << "gradcheck: --sizes needs five values C,H,W,N_v,K\n";
        return kExitUsage;
      }
      grad.sizes = {s[0], s[1], s[2], s[3], s[4]};
      return cmd_gradcheck(grad, std::cout, std::cerr);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
