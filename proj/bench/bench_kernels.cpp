// Serial reference paths vs the chunked kernels. Run with OMP_NUM_THREADS set
// to compare thread counts; the reference paths never use OpenMP.

#include <benchmark/benchmark.h>

#include <vector>

#include "flowguide/evaluator.hpp"
#include "flowguide/rng.hpp"
#include "flowguide/sampler.hpp"
#include "flowguide/toy_world.hpp"
#include "flowguide/trainer.hpp"

using namespace flowguide;

namespace {

const ModelParams& default_model() {
  static const ModelParams p = init_params(Arch{}, 0);
  return p;
}

std::vector<TrainingExample> batch_of(std::size_t n) {
  const SampleBatch data = sample_p0(n, 1);
  Stream noise(1, Role::kTrainNoise, 0);
  Stream times(1, Role::kTrainTime, 0);
  std::vector<TrainingExample> out;
  for (const auto& x0 : data.points) {
    const auto z = noise.normal_pair();
    out.push_back({x0, Point2(z[0], z[1]), times.uniform()});
  }
  return out;
}

void BM_CompoundLossReference(benchmark::State& state) {
  const auto batch = batch_of(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(compound_loss_reference(default_model(), batch, 0.5));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_CompoundLoss(benchmark::State& state) {
  const auto batch = batch_of(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(compound_loss(default_model(), batch, 0.5));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_DriftSerial(benchmark::State& state) {
  const Eigen::MatrixXd x = sample_p0(static_cast<std::size_t>(state.range(0)), 2).as_matrix();
  for (auto _ : state) {
    Eigen::MatrixXd out(2, x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i) out.col(i) = drift(default_model(), x.col(i), 0.5, nullptr);
    benchmark::DoNotOptimize(out);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_DriftBatched(benchmark::State& state) {
  const Eigen::MatrixXd x = sample_p0(static_cast<std::size_t>(state.range(0)), 2).as_matrix();
  const NetworkField field(default_model());
  for (auto _ : state) benchmark::DoNotOptimize(batch_drift(field, x, 0.5, nullptr, 1e-3));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_GuidedSde(benchmark::State& state) {
  SamplerConfig c;
  c.mode = SamplerMode::kGuidedSde;
  c.steps = 10;
  c.guidance = Guidance{make_ipa(make_weight_matrix(WeightKind::kFullMap, 1), FeatureMap::single(Point2(-1, 0))),
                        2.0, GuidanceConvention::kProp2};
  for (auto _ : state)
    benchmark::DoNotOptimize(sample_sde(default_model(), c, static_cast<std::size_t>(state.range(0))));
  state.SetItemsProcessed(state.iterations() * state.range(0) * c.steps);
}

void BM_PairwiseReference(benchmark::State& state) {
  const Eigen::MatrixXd a = sample_p0(static_cast<std::size_t>(state.range(0)), 3).as_matrix();
  const Eigen::MatrixXd b = sample_p0(static_cast<std::size_t>(state.range(0)), 4).as_matrix();
  for (auto _ : state) benchmark::DoNotOptimize(mean_pairwise_distance_reference(a, b));
}

void BM_Pairwise(benchmark::State& state) {
  const Eigen::MatrixXd a = sample_p0(static_cast<std::size_t>(state.range(0)), 3).as_matrix();
  const Eigen::MatrixXd b = sample_p0(static_cast<std::size_t>(state.range(0)), 4).as_matrix();
  for (auto _ : state) benchmark::DoNotOptimize(mean_pairwise_distance(a, b));
}

}  // namespace

BENCHMARK(BM_CompoundLossReference)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CompoundLoss)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DriftSerial)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DriftBatched)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GuidedSde)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PairwiseReference)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Pairwise)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
