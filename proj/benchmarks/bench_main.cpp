#include <random>

#include <benchmark/benchmark.h>

#include "ignite/evaluation.hpp"
#include "ignite/missingness.hpp"
#include "support.hpp"

namespace {

using namespace ignite;

void BM_Imm(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const Matrix M = testing::random_mask(48, 35, 0.3, rng);
  for (auto _ : state) benchmark::DoNotOptimize(imm(M));
}
BENCHMARK(BM_Imm);

void BM_Auroc(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u;
  const Index n = state.range(0);
  Vector s(n), y(n);
  for (Index i = 0; i < n; ++i) {
    s(i) = u(rng);
    y(i) = i % 7 == 0 ? 1.0 : 0.0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(auroc(s, y));
}
BENCHMARK(BM_Auroc)->Arg(1000)->Arg(100000);

void BM_ImputeForward(benchmark::State& state) {
  const Dataset data = testing::random_dataset(64, 48, 35, 2, 0.3, 3);
  IgniteConfig cfg;
  const IgniteModel model(cfg, shape_of(data));
  for (auto _ : state) benchmark::DoNotOptimize(model.impute(data.records));
}
BENCHMARK(BM_ImputeForward)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
  const Dataset data = testing::random_dataset(64, 24, 10, 2, 0.5, 4);
  IgniteConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train_ignite(data, cfg));
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_Chained(benchmark::State& state) {
  const Dataset data = testing::random_dataset(200, 24, 10, 0, 0.4, 5);
  const Matrix X = flatten_records(data.records, false);
  const Matrix M = flatten_records(data.records, true);
  for (auto _ : state) benchmark::DoNotOptimize(impute_chained(X, M));
}
BENCHMARK(BM_Chained)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
