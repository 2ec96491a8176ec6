#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dpca/codec.hpp"
#include "dpca/linalg.hpp"
#include "dpca/models.hpp"
#include "dpca/runtime.hpp"

#include <cstdlib>
#include <filesystem>

using namespace dpca;
namespace fs = std::filesystem;

namespace {

std::vector<models::Partition> make_partitions(int m, int d, std::int64_t n,
                                               std::uint64_t seed) {
  const auto model = models::spiked_model(d, 50.0);
  std::vector<models::Partition> partitions;
  for (int l = 0; l < m; ++l) {
    partitions.push_back(models::sample_partition(
        model, models::InnovationKind::kGaussian, n, static_cast<std::uint32_t>(l),
        seed));
  }
  return partitions;
}

}  // namespace

TEST_CASE("all transports produce identical results and ledgers") {
  const auto partitions = make_partitions(3, 10, 40, 1);
  runtime::RunOptions options;
  options.k = 2;
  options.eigenvalue_round = true;

  const auto inmemory = runtime::run_local_cluster(
      partitions, options, runtime::Transport::kInMemory);
  const auto files = runtime::run_local_cluster(
      partitions, options, runtime::Transport::kFiles,
      (fs::temp_directory_path() / "dpca_rt_files").string());
  const auto tcp =
      runtime::run_local_cluster(partitions, options, runtime::Transport::kTcp);

  CHECK(linalg::subspace_distance(inmemory.frame, files.frame) <= 1e-10);
  CHECK(linalg::subspace_distance(inmemory.frame, tcp.frame) <= 1e-10);
  REQUIRE(inmemory.refined_eigenvalues.has_value());
  CHECK((*inmemory.refined_eigenvalues - *files.refined_eigenvalues)
            .cwiseAbs()
            .maxCoeff() <= 1e-10);
  CHECK((*inmemory.refined_eigenvalues - *tcp.refined_eigenvalues)
            .cwiseAbs()
            .maxCoeff() <= 1e-10);

  // Frames round: m * K * d floats; eigenvalue round: m*K*d + m*K.
  CHECK(inmemory.ledger.frames_floats == 3ull * 2 * 10);
  CHECK(inmemory.ledger.broadcast_floats == 3ull * 2 * 10);
  CHECK(inmemory.ledger.rayleigh_reply_floats == 3ull * 2);
  CHECK(files.ledger.frames_floats == inmemory.ledger.frames_floats);
  CHECK(tcp.ledger.frames_floats == inmemory.ledger.frames_floats);
  CHECK(tcp.ledger.bytes_to_coordinator == inmemory.ledger.bytes_to_coordinator);

  fs::remove_all(fs::temp_directory_path() / "dpca_rt_files");
}

TEST_CASE("refined eigenvalues track the population spikes") {
  // d=50, lambda=50, N = m*n = 10^4.
  const auto partitions = make_partitions(20, 50, 500, 8);
  runtime::RunOptions options;
  options.k = 3;
  options.eigenvalue_round = true;
  const auto result = runtime::run_local_cluster(partitions, options,
                                                 runtime::Transport::kInMemory);
  REQUIRE(result.refined_eigenvalues.has_value());
  CHECK(std::abs((*result.refined_eigenvalues)[0] - 50.0) < 5.0);
  CHECK(std::abs((*result.refined_eigenvalues)[1] - 25.0) < 2.5);
  CHECK(std::abs((*result.refined_eigenvalues)[2] - 12.5) < 1.25);
}

TEST_CASE("worker answers both protocol rounds in order") {
  auto partitions = make_partitions(1, 6, 20, 9);
  runtime::Worker worker(partitions[0]);
  const auto frames_reply = runtime::decode(
      worker.handle(runtime::encode(runtime::Message{0, runtime::RequestTopK{2}})));
  REQUIRE(frames_reply.kind() == runtime::MessageKind::kFrames);
  const auto& frame = std::get<runtime::FramesPayload>(frames_reply.body)
                          .estimate.frame;
  const auto rayleigh_reply = runtime::decode(worker.handle(
      runtime::encode(runtime::Message{0, runtime::BroadcastFramePayload{frame}})));
  REQUIRE(rayleigh_reply.kind() == runtime::MessageKind::kRayleighValues);
  CHECK(std::get<runtime::RayleighValuesPayload>(rayleigh_reply.body).values.size() ==
        2);
}

TEST_CASE("worker replies to invalid K with a wire error and keeps serving") {
  auto partitions = make_partitions(1, 6, 20, 2);
  runtime::Worker worker(partitions[0]);

  runtime::Message request{0, runtime::RequestTopK{99}};
  const auto reply = runtime::decode(worker.handle(runtime::encode(request)));
  REQUIRE(reply.kind() == runtime::MessageKind::kError);
  CHECK(std::get<runtime::ErrorPayload>(reply.body).code ==
        runtime::WireErrorCode::kInvalidK);

  // Still answers a valid request afterwards.
  runtime::Message valid{0, runtime::RequestTopK{2}};
  const auto frames = runtime::decode(worker.handle(runtime::encode(valid)));
  CHECK(frames.kind() == runtime::MessageKind::kFrames);
}

TEST_CASE("replayed requests produce byte-identical replies") {
  auto partitions = make_partitions(1, 8, 30, 3);
  runtime::Worker worker(partitions[0]);
  const auto request = runtime::encode(runtime::Message{0, runtime::RequestTopK{3}});
  CHECK(worker.handle(request) == worker.handle(request));
}

TEST_CASE("malformed bytes get an error reply, not a closed loop") {
  auto partitions = make_partitions(1, 6, 20, 4);
  runtime::Worker worker(partitions[0]);
  const std::vector<std::uint8_t> garbage = {1, 2, 3, 4, 5};
  const auto reply = runtime::decode(worker.handle(garbage));
  CHECK(reply.kind() == runtime::MessageKind::kError);
}

TEST_CASE("dead tcp worker aborts the run with the machine index") {
  const auto partitions = make_partitions(2, 6, 20, 5);
  runtime::RunOptions options;
  options.k = 1;
  runtime::ClusterConfig config;
  config.machines = 2;
  config.timeout_secs = 0.4;

  std::vector<std::unique_ptr<runtime::WorkerChannel>> channels;
  channels.push_back(runtime::make_inmemory_channel(
      std::make_shared<runtime::Worker>(partitions[0])));
  // Port 1 is never listening.
  channels.push_back(runtime::make_tcp_channel("127.0.0.1:1", 7, 0.4));

  try {
    runtime::run_distributed(channels, options, config);
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.machine() == 7);
  }
}

TEST_CASE("allow_partial aggregates the responders and reweights") {
  const auto partitions = make_partitions(2, 6, 20, 6);
  runtime::RunOptions options;
  options.k = 1;
  runtime::ClusterConfig config;
  config.machines = 2;
  config.timeout_secs = 0.4;
  config.allow_partial = true;

  std::vector<std::unique_ptr<runtime::WorkerChannel>> channels;
  channels.push_back(runtime::make_inmemory_channel(
      std::make_shared<runtime::Worker>(partitions[0])));
  channels.push_back(runtime::make_tcp_channel("127.0.0.1:1", 1, 0.4));

  const auto result = runtime::run_distributed(channels, options, config);
  const auto solo = estimator::local_pca(partitions[0], 1);
  CHECK(linalg::subspace_distance(result.frame, solo.frame) < 1e-12);
}

TEST_CASE("files transport timeout honors DPCA_TIMEOUT_SECS") {
  const auto dir = fs::temp_directory_path() / "dpca_rt_timeout";
  fs::create_directories(dir);
  ::setenv("DPCA_TIMEOUT_SECS", "0.3", 1);
  runtime::ClusterConfig config;
  CHECK(config.effective_timeout() == doctest::Approx(0.3));
  auto channel = runtime::make_files_channel(dir.string(), 0,
                                             config.effective_timeout());
  const auto request = runtime::encode(runtime::Message{0, runtime::RequestTopK{1}});
  CHECK_THROWS_AS(channel->exchange(request), TransportError);
  ::unsetenv("DPCA_TIMEOUT_SECS");
  CHECK(runtime::ClusterConfig{}.effective_timeout() == doctest::Approx(30.0));
  fs::remove_all(dir);
}

TEST_CASE("arrival order does not change the aggregate") {
  const auto partitions = make_partitions(4, 8, 25, 7);
  runtime::RunOptions options;
  options.k = 2;
  // Same cluster twice; thread completion order is free to differ.
  const auto a =
      runtime::run_local_cluster(partitions, options, runtime::Transport::kTcp);
  const auto b =
      runtime::run_local_cluster(partitions, options, runtime::Transport::kTcp);
  CHECK((a.frame.data().array() == b.frame.data().array()).all());
}
