#include <benchmark/benchmark.h>

#include "andhra/data.hpp"
#include "andhra/network.hpp"
#include "andhra/trainer.hpp"

using namespace andhra;

namespace {

NetworkSpec spec_for(std::size_t splits, std::size_t width) {
  NetworkSpec s;
  s.branching_factor = 2;
  s.levels = 4;
  s.split_mask = {splits > 0, splits > 1, splits > 2};
  s.base_width = width;
  return s;
}

// Args: number of ANDHRA splits (0 = baseline, 3 = AB-2G with eight heads), width.
void BM_ForwardAllHeads(benchmark::State& state) {
  Rng rng(1);
  NetworkTree tree = NetworkTree::build(spec_for(std::size_t(state.range(0)), std::size_t(state.range(1))), rng);
  const Dataset d = synthetic_dataset(32, 10, rng);
  std::vector<std::size_t> idx(32);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Batch batch = make_batch(d, idx, Normalization{}, nullptr);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(tree.forward_all_heads(batch.images, Mode::Eval));
  state.counters["heads"] = double(tree.num_heads());
  state.SetItemsProcessed(state.iterations() * 32);
}

void BM_TrainStep(benchmark::State& state) {
  Rng rng(2);
  NetworkTree tree = NetworkTree::build(spec_for(std::size_t(state.range(0)), 16), rng);
  const Dataset d = synthetic_dataset(320, 10, rng);
  TrainConfig cfg;
  cfg.epochs = 1000;
  cfg.t_max = 1000;
  cfg.batch_size = 32;
  Trainer trainer(tree, d, nullptr, cfg);
  for (auto _ : state) trainer.step();
  state.counters["heads"] = double(tree.num_heads());
  state.SetItemsProcessed(state.iterations() * 32);
}

}  // namespace

BENCHMARK(BM_ForwardAllHeads)->Args({0, 16})->Args({1, 16})->Args({2, 16})->Args({3, 16})->Args({3, 32})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(3)->Unit(benchmark::kMillisecond);
