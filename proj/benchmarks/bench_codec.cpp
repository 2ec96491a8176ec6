#include "dpca/codec.hpp"
#include "dpca/models.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace dpca;

runtime::Message frames_message(int d, int k) {
  const Frame frame = models::random_frame(d, k, 3);
  Vector values = Vector::LinSpaced(k, 2.0, 1.0);
  return runtime::Message{
      0, runtime::FramesPayload{estimator::SubspaceEstimate(0, frame, values, 500)}};
}

void BM_encode_frames(benchmark::State& state) {
  const auto message =
      frames_message(static_cast<int>(state.range(0)), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(runtime::encode(message));
  }
}
BENCHMARK(BM_encode_frames)->Arg(200)->Arg(1600);

void BM_decode_frames(benchmark::State& state) {
  const auto bytes =
      runtime::encode(frames_message(static_cast<int>(state.range(0)), 3));
  for (auto _ : state) {
    benchmark::DoNotOptimize(runtime::decode(bytes));
  }
}
BENCHMARK(BM_decode_frames)->Arg(200)->Arg(1600);

}  // namespace
