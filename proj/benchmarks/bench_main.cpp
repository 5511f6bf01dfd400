#include <benchmark/benchmark.h>

#include "vitprobe/data.hpp"
#include "vitprobe/grad.hpp"
#include "vitprobe/probe.hpp"
#include "vitprobe/rng.hpp"
#include "vitprobe/tensor_ops.hpp"
#include "vitprobe/vit.hpp"
#include "vitprobe/weights_io.hpp"

using namespace vitprobe;

namespace {

Tensor filled(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  KeyedRng rng(seed);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

Tensor synth_batch(std::size_t n) {
  DatasetSpec spec;
  spec.num_samples = n;
  return preprocess_eval(synth_generate(spec).images, 32);
}

std::vector<std::int32_t> cycling_labels(std::size_t n, std::int32_t classes) {
  std::vector<std::int32_t> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<std::int32_t>(i) % classes;
  return y;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = filled({n, n}, 1);
  const Tensor b = filled({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(192)->Arg(384);

void BM_ForwardToy(benchmark::State& state) {
  const auto cfg = ModelConfig::toy();
  const auto w = init_toy(cfg, 0);
  const Tensor x = synth_batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward_logits(x, w, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardToy)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_BackwardToy(benchmark::State& state) {
  const auto cfg = ModelConfig::toy();
  const auto w = init_toy(cfg, 0);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = synth_batch(n);
  const auto y = cycling_labels(n, 10);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grads(x, y, w, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BackwardToy)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ProbeFit(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  FeatureMatrix fm{filled({800, dim}, 3), cycling_labels(800, 10), std::nullopt};
  for (auto _ : state) benchmark::DoNotOptimize(fit_probe(fm));
}
BENCHMARK(BM_ProbeFit)->Arg(192)->Arg(768)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
