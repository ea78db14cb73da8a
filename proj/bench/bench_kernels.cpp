// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "mtpsr/kernels.hpp"
#include "mtpsr/pomdp.hpp"

using namespace mtpsr;

namespace {

PsrModel model(int horizon) {
  RngStream rng(7);
  const ObsActionSpace space(3, 3, horizon);
  auto t = random_transitions(space, 4, rng);
  auto e = random_emissions(space, 4, rng);
  return pomdp_to_psr(TabularPomdp(space, 4, t, e, random_distribution(4, rng)));
}

Exec exec_of(const benchmark::State& state) { return state.range(1) == 0 ? Exec::Serial : Exec::Parallel; }

void BM_DynamicsLaw(benchmark::State& state) {
  const PsrModel m = model(static_cast<int>(state.range(0)));
  const Exec exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(dynamics_law(m, exec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m.space().trajectory_count()));
}

void BM_PolicyWeights(benchmark::State& state) {
  const ObsActionSpace space(3, 3, static_cast<int>(state.range(0)));
  const Policy pi = Policy::uniform(space);
  const Exec exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(policy_weights(pi, exec));
}

void BM_MaxWeightedDiff(benchmark::State& state) {
  const int H = static_cast<int>(state.range(0));
  const PsrModel a = model(H);
  const TrajectoryLaw la = dynamics_law(a);
  TrajectoryLaw lb = la;
  for (std::size_t i = 0; i < lb.size(); i += 3) lb[i] *= 0.9;
  std::vector<TrajectoryLaw> rows;
  for (std::uint64_t i = 0; i < 32; ++i) rows.push_back(policy_weights(reactive_from_index(a.space(), i * 977)));
  const Exec exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(max_weighted_abs_diff(la, lb, rows, exec));
}

}  // namespace

BENCHMARK(BM_DynamicsLaw)->ArgsProduct({{3, 4, 5}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_PolicyWeights)->ArgsProduct({{3, 4, 5}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MaxWeightedDiff)->ArgsProduct({{3, 4}, {0, 1}})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
