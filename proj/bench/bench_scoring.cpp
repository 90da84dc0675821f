#include <benchmark/benchmark.h>

#include "oodgate/batch.hpp"
#include "oodgate/experiments.hpp"
#include "oodgate/synthetic.hpp"

namespace {

using namespace oodgate;

const SyntheticDataset& dataset() {
  static const SyntheticDataset ds = [] {
    SyntheticSpec s;
    s.n_id_per_class = 200;
    s.n_ood = 2000;
    return gen_synthetic(s);
  }();
  return ds;
}

const FittedDetector& detector() {
  static const FittedDetector det = [] {
    DetectorConfig cfg;
    cfg.masking_percentile = 60;
    cfg.react = ReactPercentile{90};
    const auto& ds = dataset();
    return fit(ds.train, ds.train_labels, ds.head, cfg);
  }();
  return det;
}

void BM_ScoreBatchSerial(benchmark::State& state) {
  const auto& ds = dataset();
  for (auto _ : state) benchmark::DoNotOptimize(score_batch_serial(detector(), ds.test_ood));
  state.SetItemsProcessed(state.iterations() * ds.test_ood.rows());
}
BENCHMARK(BM_ScoreBatchSerial)->Unit(benchmark::kMillisecond);

void BM_ScoreBatchParallel(benchmark::State& state) {
  const auto& ds = dataset();
  const Parallelism par{static_cast<int>(state.range(0))};
  for (auto _ : state) benchmark::DoNotOptimize(score_batch(detector(), ds.test_ood, par));
  state.SetItemsProcessed(state.iterations() * ds.test_ood.rows());
}
BENCHMARK(BM_ScoreBatchParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

const Split& split() {
  static const Split s{dataset().train, dataset().train_labels, dataset().head, dataset().test_id,
                       dataset().test_ood};
  return s;
}

const SweepGrid& grid() {
  static const SweepGrid g = parse_grid("p=0:80:20,lambda=0.5/1/2/inf,smooth=0:1:1");
  return g;
}

void BM_SweepSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(sweep_serial(split(), grid(), DetectorConfig{}));
}
BENCHMARK(BM_SweepSerial)->Unit(benchmark::kMillisecond);

void BM_SweepParallel(benchmark::State& state) {
  const Parallelism par{static_cast<int>(state.range(0))};
  for (auto _ : state) benchmark::DoNotOptimize(sweep(split(), grid(), DetectorConfig{}, par));
}
BENCHMARK(BM_SweepParallel)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
