#include "dpca/linalg.hpp"
#include "dpca/models.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace dpca;

SymMatrix spiked_covariance(int d) {
  Vector values = Vector::Ones(d);
  values[0] = 50.0;
  values[1] = 25.0;
  values[2] = 12.5;
  const Frame basis = models::random_frame(d, d, 42);
  return SymMatrix(basis.data() * values.asDiagonal() * basis.data().transpose());
}

void BM_sym_eig(benchmark::State& state) {
  const SymMatrix mat = spiked_covariance(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(linalg::sym_eig(mat));
  }
}
BENCHMARK(BM_sym_eig)->Arg(64)->Arg(256);

void BM_top_k_dense(benchmark::State& state) {
  const SymMatrix mat = spiked_covariance(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        linalg::top_k_eigen(mat, 3, linalg::SolverPolicy::kDense));
  }
}
BENCHMARK(BM_top_k_dense)->Arg(64)->Arg(256)->Arg(512);

void BM_top_k_iterative(benchmark::State& state) {
  const SymMatrix mat = spiked_covariance(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        linalg::top_k_eigen(mat, 3, linalg::SolverPolicy::kIterative));
  }
}
BENCHMARK(BM_top_k_iterative)->Arg(64)->Arg(256)->Arg(512);

void BM_subspace_distance(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const Frame u = models::random_frame(d, 3, 1);
  const Frame v = models::random_frame(d, 3, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(linalg::subspace_distance(u, v));
  }
}
BENCHMARK(BM_subspace_distance)->Arg(256)->Arg(1024);

}  // namespace
