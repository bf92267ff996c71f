// Serial reference path versus the OpenMP path for the three parallel
// kernels: forest training, batch prediction and corpus feature extraction.
#include <benchmark/benchmark.h>

#include "vqoe/corpus.hpp"
#include "vqoe/forest.hpp"

using namespace vqoe;

namespace {

std::vector<CorpusProfile> profiles() {
  std::vector<CorpusProfile> out;
  for (const auto& p : builtin_profiles()) {
    CorpusProfile c;
    c.base.profile = p;
    c.vary = ConditionRanges{};
    c.vary->capacity_min = 1e6;
    c.vary->length_min = 60.0;
    c.vary->length_max = 90.0;
    out.push_back(c);
  }
  return out;
}

const std::vector<SessionSamples>& samples() {
  static const auto s = synth_samples(profiles(), 10, 3, {});
  return s;
}

const Dataset& bins() {
  static const auto d = bin_dataset(samples(), LayerSet::kNetApp);
  return d;
}

Execution mode(const benchmark::State& state) {
  return state.range(0) ? Execution::kParallel : Execution::kSerial;
}

void BM_Train(benchmark::State& state) {
  const auto& d = bins();
  const Hyperparams hp{32, std::nullopt, 1, MaxFeatures::kSqrt, 1};
  for (auto _ : state) benchmark::DoNotOptimize(train(d, ModelKind::kClassifier, hp, mode(state)));
  state.SetLabel(state.range(0) ? "openmp" : "serial");
}

void BM_Predict(benchmark::State& state) {
  const auto& d = bins();
  static const auto model = train(d, ModelKind::kClassifier, {64, std::nullopt, 1, MaxFeatures::kSqrt, 1});
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict_classes(d.feature_names, d.features, mode(state)));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * d.rows()));
  state.SetLabel(state.range(0) ? "openmp" : "serial");
}

void BM_Extract(benchmark::State& state) {
  const auto p = profiles();
  for (auto _ : state) benchmark::DoNotOptimize(synth_samples(p, 2, 5, {}, mode(state)));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 8));
  state.SetLabel(state.range(0) ? "openmp" : "serial");
}

}  // namespace

BENCHMARK(BM_Train)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Predict)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Extract)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
