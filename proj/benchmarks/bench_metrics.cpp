#include <benchmark/benchmark.h>

#include "emobench/hashing.hpp"
#include "emobench/metrics.hpp"

using namespace emobench;

namespace {

ConfusionMatrix random_matrix(std::uint64_t mass) {
  ConfusionMatrix m(scheme_for(6).class_names());
  SplitMix rng(3);
  for (std::uint64_t i = 0; i < mass; ++i) {
    const auto g = rng.below(6);
    if (rng.below(20) == 0) {
      m.add_failure(g, OutcomeKind::malformed);
    } else {
      m.add(g, rng.below(6));
    }
  }
  return m;
}

void BM_ComputeMetrics(benchmark::State& state) {
  const auto m = random_matrix(2000);
  for (auto _ : state) benchmark::DoNotOptimize(compute_metrics(m, Averaging::macro));
}
BENCHMARK(BM_ComputeMetrics);

void BM_GroupMatrix(benchmark::State& state) {
  const auto m = random_matrix(2000);
  const auto scheme = scheme_for(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(group_matrix(m, scheme));
}
BENCHMARK(BM_GroupMatrix)->Arg(3)->Arg(2);

void BM_Accumulate(benchmark::State& state) {
  const auto outcome = ParseOutcome::parsed("joy", "joy");
  for (auto _ : state) {
    ConfusionMatrix m(scheme_for(6).class_names());
    for (int i = 0; i < 600; ++i) accumulate(m, "sadness", outcome);
    benchmark::DoNotOptimize(m);
  }
}
BENCHMARK(BM_Accumulate);

}  // namespace

BENCHMARK_MAIN();
