#include <benchmark/benchmark.h>

#include "emobench/prompt.hpp"

using namespace emobench;

namespace {

void BM_Render(benchmark::State& state) {
  const auto strategy = static_cast<PromptStrategy>(state.range(0));
  const ModelDialect dialect{static_cast<DialectKind>(state.range(1)), {}};
  const PromptRenderer renderer;
  const auto scheme = scheme_for(6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(renderer.render(strategy, dialect, scheme, "i am feeling grouchy about the weather"));
  }
}
BENCHMARK(BM_Render)->ArgsProduct({{0, 1, 2, 3, 4}, {0, 1, 2}});

}  // namespace

BENCHMARK_MAIN();
