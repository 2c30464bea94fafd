#include <benchmark/benchmark.h>

#include "andhra/ops.hpp"
#include "andhra/rng.hpp"
#include "andhra/tensor.hpp"

using namespace andhra;

namespace {

Tensor random(const Shape& shape, Rng& rng, bool requires_grad) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return Tensor::from(shape, std::move(v), requires_grad);
}

// Args: batch, channels, spatial extent.
void BM_Conv2dForward(benchmark::State& state) {
  const auto b = std::size_t(state.range(0)), c = std::size_t(state.range(1)), s = std::size_t(state.range(2));
  Rng rng(1);
  const Tensor x = random({b, c, s, s}, rng, false);
  const Tensor w = random({c, c, 3, 3}, rng, false);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, 1, 1));
  state.SetItemsProcessed(state.iterations() * std::int64_t(b * c * c * s * s * 9));
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto b = std::size_t(state.range(0)), c = std::size_t(state.range(1)), s = std::size_t(state.range(2));
  Rng rng(2);
  Tensor x = random({b, c, s, s}, rng, true);
  Tensor w = random({c, c, 3, 3}, rng, true);
  for (auto _ : state) {
    x.zero_grad();
    w.zero_grad();
    sum(conv2d(x, w, 1, 1)).backward();
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(3 * b * c * c * s * s * 9));
}

void BM_BatchNormTrain(benchmark::State& state) {
  const auto c = std::size_t(state.range(0));
  Rng rng(3);
  const Tensor x = random({32, c, 16, 16}, rng, false);
  const Tensor gamma = Tensor::full({c}, 1.0), beta = Tensor::zeros({c});
  BatchNormStats stats(c);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(batchnorm2d(x, gamma, beta, stats, Mode::Train));
}

}  // namespace

BENCHMARK(BM_Conv2dForward)->Args({32, 16, 32})->Args({32, 32, 16})->Args({32, 64, 8})->Args({32, 128, 4})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dForwardBackward)->Args({32, 16, 32})->Args({32, 64, 8})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchNormTrain)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
