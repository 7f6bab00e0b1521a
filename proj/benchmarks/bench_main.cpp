#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "affcode/affinity.hpp"
#include "affcode/devset_theory.hpp"
#include "affcode/ensemble.hpp"
#include "affcode/gmm.hpp"
#include "affcode/mapping.hpp"
#include "affcode/synth.hpp"

using namespace affcode;

namespace {

struct FeatureSet {
  DatasetManifest manifest;
  FeatureStore store;
};

FeatureSet random_features(std::size_t n, std::uint32_t c, std::uint32_t hw) {
  std::mt19937_64 rng(n);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  FeatureSet out;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("x" + std::to_string(i));
    std::vector<float> values(static_cast<std::size_t>(c) * hw * hw);
    for (float& v : values) v = u(rng) < 0.5f ? 0.0f : u(rng);
    out.store.add(FilterMap(ids.back(), "L", c, hw, hw, std::move(values)));
  }
  out.manifest = DatasetManifest(ids, n, 0, {"L"});
  return out;
}

void BM_AffinityMatrix(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto data = random_features(n, 64, 7);
  const std::size_t z = 5;
  const auto sets = select_all_prototypes(data.store, z);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_affinity_matrix(data.store, sets, data.manifest, z, 1));
  }
  state.SetComplexityN(static_cast<benchmark::IterationCount>(n));
}
BENCHMARK(BM_AffinityMatrix)->Arg(25)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond)->Complexity();

void BM_FitBaseModel(benchmark::State& state) {
  PlantedSpec spec;
  spec.n = static_cast<std::size_t>(state.range(0));
  spec.alpha_good = 1;
  spec.alpha_noise = 0;
  const Matrix slice = generate_planted(spec).affinity.slice(0);
  GmmConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(fit_base_model(slice, 2, cfg));
}
BENCHMARK(BM_FitBaseModel)->Arg(100)->Arg(200)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_FitEnsemble(benchmark::State& state) {
  const auto planted = generate_planted_onehot({static_cast<std::size_t>(state.range(0)), 3, 5, 15, 0.2, 1});
  EnsembleConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(fit_ensemble(planted.concat, cfg));
}
BENCHMARK(BM_FitEnsemble)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_SolveMapping(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(k);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix w(k, k, 0.0);
  for (double& v : w.data()) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(solve_mapping(w));
}
BENCHMARK(BM_SolveMapping)->Arg(3)->Arg(10)->Arg(50)->Arg(200);

void BM_TheoryDp(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(pl_correct_class(10, 0.6, d));
  state.SetComplexityN(static_cast<benchmark::IterationCount>(d));
}
BENCHMARK(BM_TheoryDp)->RangeMultiplier(2)->Range(8, 256)->Complexity();

void BM_MinDevsetSize(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(min_devset_size(k, 0.5, 0.999));
}
BENCHMARK(BM_MinDevsetSize)->Arg(3)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
