#include "dpca/runtime.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <thread>

namespace dpca::runtime {
namespace {

using Clock = std::chrono::steady_clock;

struct Fd {
  int fd = -1;
  Fd() = default;
  explicit Fd(int fd_in) : fd(fd_in) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& other) noexcept : fd(other.fd) { other.fd = -1; }
  Fd& operator=(Fd&& other) noexcept {
    if (this != &other) {
      reset();
      fd = other.fd;
      other.fd = -1;
    }
    return *this;
  }
  ~Fd() { reset(); }
  void reset() {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }
  bool valid() const { return fd >= 0; }
};

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                        deadline - Clock::now())
                        .count();
  return left > 0 ? static_cast<int>(left) : 0;
}

void write_all(int fd, const std::uint8_t* data, std::size_t size,
               Clock::time_point deadline, std::uint32_t machine) {
  std::size_t sent = 0;
  while (sent < size) {
    pollfd pfd{fd, POLLOUT, 0};
    const int rc = ::poll(&pfd, 1, remaining_ms(deadline));
    if (rc <= 0) {
      throw TransportError(static_cast<int>(machine),
                           "worker " + std::to_string(machine) + " write timeout");
    }
    const ssize_t n = ::send(fd, data + sent, size - sent, MSG_NOSIGNAL);
    if (n <= 0) {
      throw TransportError(static_cast<int>(machine),
                           "worker " + std::to_string(machine) +
                               " connection broken during write");
    }
    sent += static_cast<std::size_t>(n);
  }
}

void read_all(int fd, std::uint8_t* data, std::size_t size,
              Clock::time_point deadline, std::uint32_t machine) {
  std::size_t got = 0;
  while (got < size) {
    pollfd pfd{fd, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, remaining_ms(deadline));
    if (rc <= 0) {
      throw TransportError(static_cast<int>(machine),
                           "worker " + std::to_string(machine) + " read timeout");
    }
    const ssize_t n = ::recv(fd, data + got, size - got, 0);
    if (n <= 0) {
      throw TransportError(static_cast<int>(machine),
                           "worker " + std::to_string(machine) +
                               " connection closed during read");
    }
    got += static_cast<std::size_t>(n);
  }
}

// A full message is self-delimiting: fixed header, then the declared
// payload length.
std::vector<std::uint8_t> read_message_bytes(int fd, Clock::time_point deadline,
                                             std::uint32_t machine) {
  std::vector<std::uint8_t> bytes(kHeaderBytes);
  read_all(fd, bytes.data(), kHeaderBytes, deadline, machine);
  std::uint64_t payload = 0;
  std::memcpy(&payload, bytes.data() + 16, 8);
  if (payload > (1ULL << 33)) {
    throw ProtocolError("message payload implausibly large");
  }
  bytes.resize(kHeaderBytes + payload);
  read_all(fd, bytes.data() + kHeaderBytes, payload, deadline, machine);
  return bytes;
}

std::pair<std::string, std::uint16_t> split_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon + 1 >= endpoint.size()) {
    throw ConfigError("bad tcp endpoint (expected host:port): " + endpoint);
  }
  const int port = std::atoi(endpoint.c_str() + colon + 1);
  if (port < 1 || port > 65535) {
    throw ConfigError("bad tcp port in endpoint: " + endpoint);
  }
  return {endpoint.substr(0, colon), static_cast<std::uint16_t>(port)};
}

class TcpChannel final : public WorkerChannel {
 public:
  TcpChannel(std::string endpoint, std::uint32_t machine, double timeout_secs)
      : endpoint_(std::move(endpoint)), machine_(machine), timeout_(timeout_secs) {}

  std::vector<std::uint8_t> exchange(const std::vector<std::uint8_t>& request) override {
    const auto deadline =
        Clock::now() + std::chrono::duration_cast<Clock::duration>(
                           std::chrono::duration<double>(timeout_));
    if (!socket_.valid()) connect_with_retry(deadline);
    write_all(socket_.fd, request.data(), request.size(), deadline, machine_);
    return read_message_bytes(socket_.fd, deadline, machine_);
  }

  std::uint32_t machine() const override { return machine_; }

 private:
  void connect_with_retry(Clock::time_point deadline) {
    const auto [host, port] = split_endpoint(endpoint_);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    const std::string resolved = host == "localhost" ? "127.0.0.1" : host;
    if (::inet_pton(AF_INET, resolved.c_str(), &addr.sin_addr) != 1) {
      throw ConfigError("tcp transport expects an IPv4 address, got: " + host);
    }
    // Workers may come up slightly after the coordinator; retry until the
    // round deadline.
    while (true) {
      Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
      if (fd.valid() &&
          ::connect(fd.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
        int one = 1;
        ::setsockopt(fd.fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        socket_ = std::move(fd);
        return;
      }
      if (Clock::now() + std::chrono::milliseconds(25) >= deadline) {
        throw TransportError(static_cast<int>(machine_),
                             "worker " + std::to_string(machine_) +
                                 " unreachable at " + endpoint_);
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }

  std::string endpoint_;
  std::uint32_t machine_;
  double timeout_;
  Fd socket_;
};

}  // namespace

std::unique_ptr<WorkerChannel> make_tcp_channel(const std::string& endpoint,
                                                std::uint32_t machine,
                                                double timeout_secs) {
  return std::make_unique<TcpChannel>(endpoint, machine, timeout_secs);
}

void worker_serve_tcp(std::uint16_t port, std::shared_ptr<Worker> worker,
                      const std::atomic<bool>& stop) {
  Fd listener(::socket(AF_INET, SOCK_STREAM, 0));
  if (!listener.valid()) throw TransportError(-1, "worker: cannot create socket");
  int one = 1;
  ::setsockopt(listener.fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(listener.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw TransportError(-1, "worker: cannot bind port " + std::to_string(port));
  }
  if (::listen(listener.fd, 4) != 0) {
    throw TransportError(-1, "worker: listen failed");
  }

  while (!stop.load(std::memory_order_relaxed)) {
    pollfd pfd{listener.fd, POLLIN, 0};
    if (::poll(&pfd, 1, 50) <= 0) continue;
    Fd conn(::accept(listener.fd, nullptr, nullptr));
    if (!conn.valid()) continue;
    // One connection at a time; serve messages until the peer hangs up.
    while (!stop.load(std::memory_order_relaxed)) {
      pollfd cpfd{conn.fd, POLLIN, 0};
      const int rc = ::poll(&cpfd, 1, 50);
      if (rc < 0) break;
      if (rc == 0) continue;
      std::vector<std::uint8_t> request;
      try {
        request = read_message_bytes(
            conn.fd, Clock::now() + std::chrono::seconds(30), worker->machine());
      } catch (const Error&) {
        break;  // peer closed or corrupted stream framing
      }
      const auto reply = worker->handle(request);
      try {
        write_all(conn.fd, reply.data(), reply.size(),
                  Clock::now() + std::chrono::seconds(30), worker->machine());
      } catch (const Error&) {
        break;
      }
    }
  }
}

// ----- local cluster helper ---------------------------------------------------

estimator::AggregateResult run_local_cluster(std::vector<models::Partition> partitions,
                                             const RunOptions& options,
                                             Transport transport,
                                             const std::string& scratch_dir) {
  if (partitions.empty()) throw ConfigError("run_local_cluster: no partitions");
  namespace fs = std::filesystem;

  ClusterConfig config;
  config.machines = static_cast<int>(partitions.size());
  config.transport = transport;

  std::vector<std::shared_ptr<Worker>> workers;
  workers.reserve(partitions.size());
  for (auto& partition : partitions) {
    workers.push_back(std::make_shared<Worker>(std::move(partition), options.pca));
  }

  std::vector<std::unique_ptr<WorkerChannel>> channels;
  std::atomic<bool> stop{false};
  std::vector<std::thread> threads;
  const double timeout = config.effective_timeout();

  fs::path dir;
  if (transport == Transport::kFiles) {
    dir = scratch_dir.empty()
              ? fs::temp_directory_path() / ("dpca_files_" + std::to_string(::getpid()))
              : fs::path(scratch_dir);
    fs::create_directories(dir);
  }

  // Deterministic localhost port block derived from the pid so parallel test
  // runs do not collide.
  const std::uint16_t base_port =
      static_cast<std::uint16_t>(20000 + (::getpid() * 131) % 20000);

  try {
    for (std::size_t i = 0; i < workers.size(); ++i) {
      switch (transport) {
        case Transport::kInMemory:
          channels.push_back(make_inmemory_channel(workers[i]));
          break;
        case Transport::kFiles: {
          auto worker = workers[i];
          const std::string dir_str = dir.string();
          threads.emplace_back([dir_str, worker, &stop] {
            try {
              worker_serve_files(dir_str, worker, stop);
            } catch (const Error&) {
              // Surface as a coordinator-side timeout.
            }
          });
          channels.push_back(
              make_files_channel(dir_str, workers[i]->machine(), timeout));
          break;
        }
        case Transport::kTcp: {
          const std::uint16_t port = static_cast<std::uint16_t>(base_port + i);
          auto worker = workers[i];
          threads.emplace_back([port, worker, &stop] {
            try {
              worker_serve_tcp(port, worker, stop);
            } catch (const Error&) {
              // Surface as a coordinator-side timeout.
            }
          });
          channels.push_back(make_tcp_channel("127.0.0.1:" + std::to_string(port),
                                              workers[i]->machine(), timeout));
          break;
        }
      }
    }
    auto result = run_distributed(channels, options, config);
    stop.store(true);
    for (auto& t : threads) t.join();
    return result;
  } catch (...) {
    stop.store(true);
    for (auto& t : threads) t.join();
    throw;
  }
}

}  // namespace dpca::runtime
