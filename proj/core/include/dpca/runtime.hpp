#pragma once

#include "dpca/codec.hpp"
#include "dpca/estimator.hpp"
#include "dpca/models.hpp"

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dpca::runtime {

enum class Transport { kInMemory, kFiles, kTcp };

std::string to_string(Transport transport);
Transport transport_from_string(const std::string& name);

struct ClusterConfig {
  int machines = 1;
  Transport transport = Transport::kInMemory;
  // Per-machine endpoints: "host:port" for tcp, a directory for files.
  // Unused for the in-memory transport.
  std::vector<std::string> endpoints;
  // 0 means: use DPCA_TIMEOUT_SECS if set, otherwise 30 seconds per round.
  double timeout_secs = 0.0;
  // Aggregate over whichever workers responded, reweighting by the count.
  // This is not the stated algorithm (which averages over exactly m
  // machines); off by default.
  bool allow_partial = false;

  double effective_timeout() const;
};

struct RunOptions {
  int k = 1;
  int extra = 0;  // workers transmit K + extra eigenvectors
  bool eigenvalue_round = false;
  estimator::PcaOptions pca;
  estimator::AggregateOptions agg;
};

// Transport-independent worker protocol logic. Answers RequestTopK with
// Frames and BroadcastFrame with RayleighValues; malformed or invalid
// requests produce an Error reply and leave the worker usable. Replays of an
// identical request return byte-identical replies.
class Worker {
 public:
  Worker(models::Partition partition, estimator::PcaOptions options = {});

  std::vector<std::uint8_t> handle(const std::vector<std::uint8_t>& request);
  std::uint32_t machine() const { return partition_.machine; }

 private:
  Message handle_message(const Message& request);
  Vector rayleigh_values(const Frame& frame);

  models::Partition partition_;
  estimator::PcaOptions options_;
  std::optional<SymMatrix> covariance_cache_;
  std::vector<std::pair<int, std::vector<std::uint8_t>>> frames_cache_;  // by rank
};

// One blocking request/reply exchange with a single worker. Implementations
// throw TransportError on timeouts and connection failures.
class WorkerChannel {
 public:
  virtual ~WorkerChannel() = default;
  virtual std::vector<std::uint8_t> exchange(
      const std::vector<std::uint8_t>& request) = 0;
  virtual std::uint32_t machine() const = 0;
};

std::unique_ptr<WorkerChannel> make_inmemory_channel(std::shared_ptr<Worker> worker);
std::unique_ptr<WorkerChannel> make_files_channel(const std::string& directory,
                                                  std::uint32_t machine,
                                                  double timeout_secs);
std::unique_ptr<WorkerChannel> make_tcp_channel(const std::string& endpoint,
                                                std::uint32_t machine,
                                                double timeout_secs);

// Runs the one-shot protocol (plus the optional eigenvalue round) over the
// given channels. Requests go out to all workers concurrently; each round is
// a barrier. Results are identical across transports for the same inputs,
// and a failed worker aborts the run unless allow_partial is set.
estimator::AggregateResult run_distributed(
    const std::vector<std::unique_ptr<WorkerChannel>>& channels,
    const RunOptions& options, const ClusterConfig& config);

// Service loops. They return when `stop` becomes true (checked between
// polls / connections).
void worker_serve_files(const std::string& directory, std::shared_ptr<Worker> worker,
                        const std::atomic<bool>& stop);
void worker_serve_tcp(std::uint16_t port, std::shared_ptr<Worker> worker,
                      const std::atomic<bool>& stop);

// Spins up in-process workers for the requested transport, runs the
// coordinator against them and tears everything down. Endpoints/directories
// are provisioned automatically for files (under scratch_dir) and tcp
// (sequential localhost ports).
estimator::AggregateResult run_local_cluster(std::vector<models::Partition> partitions,
                                             const RunOptions& options,
                                             Transport transport,
                                             const std::string& scratch_dir = "");

}  // namespace dpca::runtime
