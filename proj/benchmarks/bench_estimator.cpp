#include "dpca/estimator.hpp"
#include "dpca/models.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace dpca;

void BM_local_pca(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const auto n = static_cast<std::int64_t>(state.range(1));
  const auto model = models::spiked_model(d, 50.0);
  const auto partition =
      models::sample_partition(model, models::InnovationKind::kGaussian, n, 0, 7);
  estimator::PcaOptions options;
  options.solver = static_cast<linalg::SolverPolicy>(state.range(2));
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimator::local_pca(partition, 3, options));
  }
}
BENCHMARK(BM_local_pca)
    ->Args({200, 500, 0 /* auto */})
    ->Args({200, 500, 2 /* iterative */})
    ->Args({400, 500, 0})
    ->Args({400, 500, 2})
    ->Args({1600, 256, 0});

void BM_aggregate(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const int m = static_cast<int>(state.range(1));
  std::vector<estimator::SubspaceEstimate> estimates;
  for (int l = 0; l < m; ++l) {
    estimates.emplace_back(static_cast<std::uint32_t>(l),
                           models::random_frame(d, 3, 100 + l),
                           Vector{{3.0, 2.0, 1.0}}, 100);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimator::aggregate(estimates, 3));
  }
}
BENCHMARK(BM_aggregate)->Args({200, 20})->Args({800, 50});

void BM_sample_partition(benchmark::State& state) {
  const auto model = models::spiked_model(static_cast<int>(state.range(0)), 50.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(models::sample_partition(
        model, models::InnovationKind::kGaussian, state.range(1), 0, 11));
  }
}
BENCHMARK(BM_sample_partition)->Args({200, 500})->Args({400, 2000});

}  // namespace
