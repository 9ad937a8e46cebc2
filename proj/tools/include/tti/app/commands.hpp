#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tti/app/gradcheck.hpp"

namespace tti::app {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    // bad config, bad arguments, unwritable output
inline constexpr int kExitPartial = 2;  // some episodes failed, the rest were scored
inline constexpr int kExitNumeric = 3;  // gradient check out of tolerance

/// Command-line overrides applied on top of the config file.
struct RunArgs {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

/// Runs every episode of the configured source and writes, under the output
/// directory, pred/<id>.fts, gt/<id>.fts (when ground truth exists),
/// trace/<id>.json and results.jsonl with one record per episode in episode
/// order.
int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err);

struct EvalArgs {
  std::filesystem::path pred;
  std::filesystem::path gt;
  std::vector<std::string> metrics{"miou", "vc"};
  std::vector<std::size_t> windows{3};
  std::optional<std::filesystem::path> out;  // defaults to `pred`
};

/// Scores every pred/*.fts against the same-named ground truth. Episodes are
/// grouped into runs by the id prefix before the first '_'. Prints mean and
/// spread across runs, and writes episodes.tsv and vc_curve.tsv.
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);

struct SynthArgs {
  std::filesystem::path spec;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

/// Writes `count` synthetic episodes with ground truth as an episode set.
int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err);

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err);

/// "1,2,3" -> {"1", "2", "3"}; empty items are dropped.
std::vector<std::string> split_list(const std::string& text);

}  // namespace tti::app
