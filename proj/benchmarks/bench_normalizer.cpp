#include <benchmark/benchmark.h>

#include "emobench/normalizer.hpp"
#include "emobench/prompt.hpp"

using namespace emobench;

namespace {

void BM_DecodeBasic(benchmark::State& state) {
  const ResponseNormalizer normalizer;
  const auto prompt = render(PromptStrategy::basic, {}, scheme_for(6), "i feel so alone tonight");
  for (auto _ : state) benchmark::DoNotOptimize(normalizer.decode("The emotion is: Sadness.", prompt));
}
BENCHMARK(BM_DecodeBasic);

void BM_DecodePercent(benchmark::State& state) {
  const ResponseNormalizer normalizer;
  const auto prompt = render(PromptStrategy::percent, {}, scheme_for(6), "i feel so alone tonight");
  const std::string reply =
      "```json\n{\"sadness\": 60, \"joy\": 5, \"love\": 5, \"anger\": 10, \"fear\": 15, \"surprise\": 5}\n```";
  for (auto _ : state) benchmark::DoNotOptimize(normalizer.decode(reply, prompt));
}
BENCHMARK(BM_DecodePercent);

void BM_ParseMask(benchmark::State& state) {
  const auto alphabet = mask_alphabet(scheme_for(6));
  for (auto _ : state) benchmark::DoNotOptimize(parse_mask("Answer: 000100", alphabet));
}
BENCHMARK(BM_ParseMask);

}  // namespace

BENCHMARK_MAIN();
