#include <benchmark/benchmark.h>

#include <algorithm>
#include <cmath>

#include "andhra/ensemble.hpp"
#include "andhra/rng.hpp"

using namespace andhra;

namespace {

HeadPredictions random_preds(std::size_t h, std::size_t b, std::size_t k) {
  Rng rng(1);
  HeadPredictions p(h, b, k);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t s = 0; s < b; ++s) {
      double total = 0.0;
      for (std::size_t c = 0; c < k; ++c) total += (p.at(i, s, c) = std::exp(2.0 * rng.normal()));
      for (std::size_t c = 0; c < k; ++c) p.at(i, s, c) /= total;
    }
  return p;
}

// Args: combiner index (majority, avgprob, poe, rank), heads, classes; 10000 samples.
void BM_Combiner(benchmark::State& state) {
  const auto kind = all_combiners()[std::size_t(state.range(0))];
  const HeadPredictions p = random_preds(std::size_t(state.range(1)), 10000, std::size_t(state.range(2)));
  for (auto _ : state) benchmark::DoNotOptimize(combine(kind, p));
  state.SetLabel(to_string(kind));
  state.SetItemsProcessed(state.iterations() * 10000);
}

}  // namespace

BENCHMARK(BM_Combiner)
    ->ArgsProduct({{0, 1, 2, 3}, {8}, {10, 100}})
    ->Unit(benchmark::kMillisecond);
