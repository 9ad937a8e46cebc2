#include <benchmark/benchmark.h>

#include <random>

#include "tti/losses.hpp"
#include "tti/numerics.hpp"
#include "tti/optimizer.hpp"
#include "tti/synthetic.hpp"

namespace {

using namespace tti;

Episode episode(std::size_t side, std::size_t frames) {
  SyntheticSpec spec;
  spec.height = side;
  spec.width = side;
  spec.frames = frames;
  spec.shots = 5;
  spec.drift = 0.05;
  spec.noise = 1.0;
  spec.background_overlap = 0.5;
  spec.seed = 1;
  return generate_synthetic(spec);
}

struct Normalized {
  FeatureSequence query;
  SupportSet support;
};

Normalized normalized(const Episode& ep) {
  Normalized n;
  for (const auto& f : ep.query) n.query.push_back(normalize_features(f));
  for (const auto& s : ep.support) n.support.push_back({normalize_features(s.features), s.mask});
  return n;
}

void BM_Predict(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto n = normalized(episode(side, 1));
  const FrameClassifier clf{imprint_weights(n.support), 0.3, 20.0};
  for (auto _ : state) benchmark::DoNotOptimize(predict(n.query[0], clf));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side));
}
BENCHMARK(BM_Predict)->Arg(16)->Arg(32)->Arg(64);

void BM_CombinedLoss(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  const auto n = normalized(episode(16, frames));
  TtiConfig cfg;
  const auto bank = initialize_bank(n.query, n.support, cfg);
  std::vector<LabelMarginal> priors(frames);
  const Lambdas lambdas{0.2, 1.2, 0.2};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        combined_loss(n.query, n.support, bank, global_prototype(bank), priors, lambdas));
  }
}
BENCHMARK(BM_CombinedLoss)->Arg(4)->Arg(12);

void BM_StageOne(benchmark::State& state) {
  const auto n = normalized(episode(16, 12));
  TtiConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(tti_stage1(n.query, n.support, cfg));
}
BENCHMARK(BM_StageOne)->Unit(benchmark::kMillisecond);

void BM_RunEpisode(benchmark::State& state) {
  const auto ep = episode(16, 12);
  TtiConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(run_episode(ep, cfg));
}
BENCHMARK(BM_RunEpisode)->Unit(benchmark::kMillisecond);

void BM_DistanceTransform(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::bernoulli_distribution on(0.02);
  std::vector<std::uint8_t> v(side * side);
  for (auto& x : v) x = on(rng) ? 1 : 0;
  v[0] = 1;
  const BinaryMask m(side, side, v);
  for (auto _ : state) benchmark::DoNotOptimize(distance_transform(m.view()));
}
BENCHMARK(BM_DistanceTransform)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
