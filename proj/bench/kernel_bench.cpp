// Serial reference kernels against their chunked OpenMP counterparts.
// The Arg of each parallel benchmark is the worker count.

#include <benchmark/benchmark.h>

#include <vector>

#include "tsrkoop/edmd.hpp"
#include "tsrkoop/koopman.hpp"
#include "tsrkoop/metrics.hpp"
#include "tsrkoop/sampler.hpp"

namespace {

using namespace tsrkoop;

constexpr int kTrajectories = 512;

const Dataset& dataset() {
  static const Dataset ds = [] {
    SampleConfig cfg;
    cfg.seed = 3;
    return sample_dataset(cfg, kTrajectories);
  }();
  return ds;
}

TrainConfig model_config() {
  TrainConfig cfg;
  cfg.latent_dim = 16;
  cfg.hidden_width = 64;
  cfg.hidden_layers = 2;
  cfg.seed = 4;
  return cfg;
}

const KoopmanModel& model() {
  static const KoopmanModel m = init_koopman(model_config());
  return m;
}

std::vector<const Trajectory*> batch_pointers() {
  std::vector<const Trajectory*> out;
  for (const auto& t : dataset().trajectories) out.push_back(&t);
  return out;
}

void BM_sample_serial(benchmark::State& state) {
  SampleConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(sample_dataset_serial(cfg, kTrajectories));
}

void BM_sample_parallel(benchmark::State& state) {
  SampleConfig cfg;
  cfg.workers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sample_dataset(cfg, kTrajectories));
}

void BM_loss_gradient_serial(benchmark::State& state) {
  const auto batch = batch_pointers();
  const auto cfg = model_config();
  ModelGradients grad;
  for (auto _ : state)
    benchmark::DoNotOptimize(loss_and_gradient_serial(model(), batch, cfg, grad));
}

void BM_loss_gradient_parallel(benchmark::State& state) {
  const auto batch = batch_pointers();
  const auto cfg = model_config();
  ModelGradients grad;
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(loss_and_gradient(model(), batch, cfg, grad, workers));
}

void BM_edmd_fit_serial(benchmark::State& state) {
  const auto dict = make_rbf_dictionary(36, dataset().config, 7);
  for (auto _ : state) benchmark::DoNotOptimize(edmd_fit_serial(dataset(), dict));
}

void BM_edmd_fit_parallel(benchmark::State& state) {
  const auto dict = make_rbf_dictionary(36, dataset().config, 7);
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(edmd_fit(dataset(), dict, kEdmdRidge, workers));
}

void BM_prediction_error_serial(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(prediction_error_serial(model(), dataset().trajectories));
}

void BM_prediction_error_parallel(benchmark::State& state) {
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(prediction_error(model(), dataset().trajectories, workers));
}

#define WORKER_ARGS ->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)

BENCHMARK(BM_sample_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sample_parallel) WORKER_ARGS;
BENCHMARK(BM_loss_gradient_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_loss_gradient_parallel) WORKER_ARGS;
BENCHMARK(BM_edmd_fit_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_edmd_fit_parallel) WORKER_ARGS;
BENCHMARK(BM_prediction_error_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_prediction_error_parallel) WORKER_ARGS;

}  // namespace

BENCHMARK_MAIN();
