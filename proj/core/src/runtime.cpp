#include "dpca/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <thread>

namespace dpca::runtime {
namespace fs = std::filesystem;
namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string to_string(Transport transport) {
  switch (transport) {
    case Transport::kInMemory: return "inmemory";
    case Transport::kFiles: return "files";
    case Transport::kTcp: return "tcp";
  }
  return "unknown";
}

Transport transport_from_string(const std::string& name) {
  if (name == "inmemory") return Transport::kInMemory;
  if (name == "files") return Transport::kFiles;
  if (name == "tcp") return Transport::kTcp;
  throw ConfigError("unknown transport: " + name);
}

double ClusterConfig::effective_timeout() const {
  if (timeout_secs > 0.0) return timeout_secs;
  if (const char* env = std::getenv("DPCA_TIMEOUT_SECS")) {
    char* end = nullptr;
    const double v = std::strtod(env, &end);
    if (end != env && v > 0.0) return v;
  }
  return 30.0;
}

// ----- worker ---------------------------------------------------------------

Worker::Worker(models::Partition partition, estimator::PcaOptions options)
    : partition_(std::move(partition)), options_(options) {}

Vector Worker::rayleigh_values(const Frame& frame) {
  // v^T Sigma_hat v; the covariance is cached between rounds when it is
  // worth materializing, otherwise the quadratic form goes through the data.
  if (partition_.dim() <= 512) {
    if (!covariance_cache_) {
      covariance_cache_ = estimator::sample_covariance(partition_, options_);
    }
    Vector values(frame.rank());
    for (int j = 0; j < frame.rank(); ++j) {
      values[j] = frame.data().col(j).dot(covariance_cache_->data() *
                                          frame.data().col(j));
    }
    return values;
  }
  const Matrix projected = partition_.data * frame.data();  // n x K
  Vector values(frame.rank());
  const double divisor =
      options_.unbiased_divisor && partition_.sample_count() > 1
          ? static_cast<double>(partition_.sample_count() - 1)
          : static_cast<double>(partition_.sample_count());
  for (int j = 0; j < frame.rank(); ++j) {
    values[j] = projected.col(j).squaredNorm() / divisor;
  }
  return values;
}

Message Worker::handle_message(const Message& request) {
  Message reply;
  reply.machine = partition_.machine;
  switch (request.kind()) {
    case MessageKind::kRequestTopK: {
      const int k = static_cast<int>(std::get<RequestTopK>(request.body).k);
      if (k > partition_.dim()) {
        reply.body = ErrorPayload{WireErrorCode::kInvalidK,
                                  "K = " + std::to_string(k) + " exceeds d = " +
                                      std::to_string(partition_.dim())};
        return reply;
      }
      reply.body = FramesPayload{estimator::local_pca(partition_, k, options_)};
      return reply;
    }
    case MessageKind::kBroadcastFrame: {
      const auto& frame = std::get<BroadcastFramePayload>(request.body).frame;
      if (frame.dim() != partition_.dim()) {
        reply.body = ErrorPayload{WireErrorCode::kMalformed,
                                  "broadcast frame dimension mismatch"};
        return reply;
      }
      reply.body = RayleighValuesPayload{rayleigh_values(frame)};
      return reply;
    }
    default:
      reply.body = ErrorPayload{WireErrorCode::kMalformed,
                                "unexpected message kind for a worker"};
      return reply;
  }
}

std::vector<std::uint8_t> Worker::handle(const std::vector<std::uint8_t>& request) {
  Message decoded;
  try {
    decoded = decode(request);
  } catch (const DecodeError& e) {
    Message reply;
    reply.machine = partition_.machine;
    reply.body = ErrorPayload{WireErrorCode::kMalformed, e.what()};
    return encode(reply);
  }
  if (decoded.kind() == MessageKind::kRequestTopK) {
    const int k = static_cast<int>(std::get<RequestTopK>(decoded.body).k);
    for (const auto& [rank, bytes] : frames_cache_) {
      if (rank == k) return bytes;  // replay: byte-identical
    }
    auto bytes = encode(handle_message(decoded));
    if (k <= partition_.dim()) frames_cache_.emplace_back(k, bytes);
    return bytes;
  }
  try {
    return encode(handle_message(decoded));
  } catch (const Error& e) {
    Message reply;
    reply.machine = partition_.machine;
    reply.body = ErrorPayload{WireErrorCode::kInternal, e.what()};
    return encode(reply);
  }
}

// ----- in-memory channel -----------------------------------------------------

namespace {

class InMemoryChannel final : public WorkerChannel {
 public:
  explicit InMemoryChannel(std::shared_ptr<Worker> worker)
      : worker_(std::move(worker)) {}

  std::vector<std::uint8_t> exchange(const std::vector<std::uint8_t>& request) override {
    return worker_->handle(request);
  }
  std::uint32_t machine() const override { return worker_->machine(); }

 private:
  std::shared_ptr<Worker> worker_;
};

// ----- files channel ---------------------------------------------------------
//
// Coordinator writes <dir>/request_<seq>_<l>.bin; the worker answers into
// <dir>/reply_<l>.bin (atomically, via rename). The coordinator consumes and
// deletes the reply before issuing the next request, so replies cannot be
// confused across rounds.

class FilesChannel final : public WorkerChannel {
 public:
  FilesChannel(fs::path dir, std::uint32_t machine, double timeout_secs)
      : dir_(std::move(dir)), machine_(machine), timeout_(timeout_secs) {}

  std::vector<std::uint8_t> exchange(const std::vector<std::uint8_t>& request) override {
    const fs::path reply = dir_ / ("reply_" + std::to_string(machine_) + ".bin");
    std::error_code ec;
    fs::remove(reply, ec);
    write_file_atomic(dir_ / ("request_" + std::to_string(seq_) + "_" +
                              std::to_string(machine_) + ".bin"),
                      request);
    ++seq_;
    const auto deadline =
        Clock::now() + std::chrono::duration_cast<Clock::duration>(
                           std::chrono::duration<double>(timeout_));
    while (Clock::now() < deadline) {
      if (fs::exists(reply, ec)) {
        auto bytes = read_file_bytes(reply);
        fs::remove(reply, ec);
        return bytes;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    throw TransportError(static_cast<int>(machine_),
                         "worker " + std::to_string(machine_) +
                             " timed out (files transport, " +
                             std::to_string(timeout_) + "s)");
  }

  std::uint32_t machine() const override { return machine_; }

 private:
  fs::path dir_;
  std::uint32_t machine_;
  double timeout_;
  std::uint64_t seq_ = 0;
};

}  // namespace

std::unique_ptr<WorkerChannel> make_inmemory_channel(std::shared_ptr<Worker> worker) {
  return std::make_unique<InMemoryChannel>(std::move(worker));
}

std::unique_ptr<WorkerChannel> make_files_channel(const std::string& directory,
                                                  std::uint32_t machine,
                                                  double timeout_secs) {
  return std::make_unique<FilesChannel>(directory, machine, timeout_secs);
}

void worker_serve_files(const std::string& directory, std::shared_ptr<Worker> worker,
                        const std::atomic<bool>& stop) {
  const fs::path dir(directory);
  std::uint64_t seq = 0;
  while (!stop.load(std::memory_order_relaxed)) {
    const fs::path request = dir / ("request_" + std::to_string(seq) + "_" +
                                    std::to_string(worker->machine()) + ".bin");
    std::error_code ec;
    if (fs::exists(request, ec)) {
      const auto bytes = read_file_bytes(request);
      const auto reply = worker->handle(bytes);
      write_file_atomic(dir / ("reply_" + std::to_string(worker->machine()) + ".bin"),
                        reply);
      fs::remove(request, ec);
      ++seq;
      continue;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
}

// ----- coordinator -----------------------------------------------------------

namespace {

struct RoundReply {
  std::uint32_t machine = 0;
  std::vector<std::uint8_t> bytes;
  std::exception_ptr failure;
};

std::vector<RoundReply> exchange_round(
    const std::vector<std::unique_ptr<WorkerChannel>>& channels,
    const std::vector<std::vector<std::uint8_t>>& requests) {
  std::vector<RoundReply> replies(channels.size());
  std::vector<std::future<void>> pending;
  pending.reserve(channels.size());
  for (std::size_t i = 0; i < channels.size(); ++i) {
    pending.push_back(std::async(std::launch::async, [&, i] {
      replies[i].machine = channels[i]->machine();
      try {
        replies[i].bytes = channels[i]->exchange(requests[i]);
      } catch (...) {
        replies[i].failure = std::current_exception();
      }
    }));
  }
  for (auto& f : pending) f.wait();
  return replies;
}

Message decode_reply(const RoundReply& reply, MessageKind expected) {
  if (reply.failure) std::rethrow_exception(reply.failure);
  Message message = decode(reply.bytes);
  if (message.kind() == MessageKind::kError) {
    const auto& err = std::get<ErrorPayload>(message.body);
    throw ProtocolError("worker " + std::to_string(reply.machine) +
                        " replied with error: " + err.text);
  }
  if (message.kind() != expected) {
    throw ProtocolError("worker " + std::to_string(reply.machine) +
                        " replied with unexpected message kind");
  }
  return message;
}

}  // namespace

estimator::AggregateResult run_distributed(
    const std::vector<std::unique_ptr<WorkerChannel>>& channels,
    const RunOptions& options, const ClusterConfig& config) {
  if (channels.empty()) throw ConfigError("run_distributed: no workers");
  if (options.k < 1) throw ConfigError("run_distributed: K must be >= 1");
  if (options.extra < 0) throw ConfigError("run_distributed: extra must be >= 0");

  const int rank = options.k + options.extra;
  std::uint64_t bytes_to_workers = 0;
  std::uint64_t bytes_to_coordinator = 0;

  // Round 1: request the local top-(K+x) frames from every worker.
  std::vector<std::vector<std::uint8_t>> requests;
  requests.reserve(channels.size());
  for (const auto& channel : channels) {
    Message req;
    req.machine = channel->machine();
    req.body = RequestTopK{static_cast<std::uint32_t>(rank)};
    requests.push_back(encode(req));
    bytes_to_workers += requests.back().size();
  }
  auto replies = exchange_round(channels, requests);

  std::vector<estimator::SubspaceEstimate> estimates;
  std::vector<std::size_t> responders;
  estimates.reserve(channels.size());
  for (std::size_t i = 0; i < replies.size(); ++i) {
    if (replies[i].failure && config.allow_partial) continue;
    Message message = decode_reply(replies[i], MessageKind::kFrames);
    bytes_to_coordinator += replies[i].bytes.size();
    estimates.push_back(std::get<FramesPayload>(message.body).estimate);
    responders.push_back(i);
  }
  if (estimates.empty()) {
    throw TransportError(-1, "run_distributed: no worker responded");
  }
  const int d = estimates.front().frame.dim();
  for (const auto& est : estimates) {
    if (est.frame.dim() != d) {
      throw ProtocolError("run_distributed: dimension mismatch across workers (machine " +
                          std::to_string(est.machine) + ")");
    }
  }

  auto result = estimator::aggregate(estimates, options.k, options.agg);

  // Round 2 (optional): broadcast the aggregated frame, average the
  // Rayleigh quotients.
  if (options.eigenvalue_round) {
    std::vector<std::vector<std::uint8_t>> broadcasts;
    std::vector<WorkerChannel*> round_channels;
    for (std::size_t i : responders) {
      Message req;
      req.machine = channels[i]->machine();
      req.body = BroadcastFramePayload{result.frame};
      broadcasts.push_back(encode(req));
      bytes_to_workers += broadcasts.back().size();
      round_channels.push_back(channels[i].get());
    }
    std::vector<RoundReply> second(round_channels.size());
    {
      std::vector<std::future<void>> pending;
      for (std::size_t i = 0; i < round_channels.size(); ++i) {
        pending.push_back(std::async(std::launch::async, [&, i] {
          second[i].machine = round_channels[i]->machine();
          try {
            second[i].bytes = round_channels[i]->exchange(broadcasts[i]);
          } catch (...) {
            second[i].failure = std::current_exception();
          }
        }));
      }
      for (auto& f : pending) f.wait();
    }
    // Deterministic mean: sort replies by machine index.
    std::sort(second.begin(), second.end(),
              [](const RoundReply& a, const RoundReply& b) {
                return a.machine < b.machine;
              });
    Vector sum = Vector::Zero(options.k);
    for (const auto& reply : second) {
      Message message = decode_reply(reply, MessageKind::kRayleighValues);
      bytes_to_coordinator += reply.bytes.size();
      const auto& values = std::get<RayleighValuesPayload>(message.body).values;
      if (values.size() != options.k) {
        throw ProtocolError("run_distributed: Rayleigh reply has wrong length");
      }
      sum += values;
    }
    result.refined_eigenvalues = Vector(sum / static_cast<double>(second.size()));
    result.ledger.broadcast_floats = static_cast<std::uint64_t>(second.size()) *
                                     options.k * d;
    result.ledger.rayleigh_reply_floats =
        static_cast<std::uint64_t>(second.size()) * options.k;
  }

  result.ledger.bytes_to_workers = bytes_to_workers;
  result.ledger.bytes_to_coordinator = bytes_to_coordinator;
  return result;
}

}  // namespace dpca::runtime
