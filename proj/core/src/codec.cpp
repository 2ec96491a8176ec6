#include "dpca/codec.hpp"

#include <cstring>

namespace dpca::runtime {
namespace {

constexpr char kMagic[4] = {'D', 'P', 'C', 'M'};

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void bytes(const void* p, std::size_t n) { raw(p, n); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
  double f64() { double v; raw(&v, 8); return v; }
  void bytes(void* p, std::size_t n) { raw(p, n); }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void raw(void* p, std::size_t n) {
    if (n > buf_.size() - pos_) {
      throw DecodeError(pos_, "message truncated");
    }
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

void write_matrix(Writer& w, const Matrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) w.f64(m(i, j));
}

Matrix read_matrix(Reader& r, std::uint64_t rows, std::uint64_t cols) {
  if (rows < 1 || cols < 1 || rows > (1ULL << 24) || cols > rows) {
    throw DecodeError(r.offset(), "implausible frame shape");
  }
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = r.f64();
  return m;
}

void encode_body(Writer& w, const Message& message) {
  switch (message.kind()) {
    case MessageKind::kRequestTopK: {
      const auto& p = std::get<RequestTopK>(message.body);
      if (p.k < 1) throw InvalidInputError("encode: RequestTopK needs K >= 1");
      w.u32(p.k);
      return;
    }
    case MessageKind::kFrames: {
      const auto& est = std::get<FramesPayload>(message.body).estimate;
      w.u64(static_cast<std::uint64_t>(est.frame.dim()));
      w.u32(static_cast<std::uint32_t>(est.frame.rank()));
      w.u64(static_cast<std::uint64_t>(est.sample_count));
      write_matrix(w, est.frame.data());
      for (Eigen::Index i = 0; i < est.local_eigenvalues.size(); ++i) {
        w.f64(est.local_eigenvalues[i]);
      }
      return;
    }
    case MessageKind::kBroadcastFrame: {
      const auto& p = std::get<BroadcastFramePayload>(message.body);
      w.u64(static_cast<std::uint64_t>(p.frame.dim()));
      w.u32(static_cast<std::uint32_t>(p.frame.rank()));
      write_matrix(w, p.frame.data());
      return;
    }
    case MessageKind::kRayleighValues: {
      const auto& p = std::get<RayleighValuesPayload>(message.body);
      if (p.values.size() < 1) {
        throw InvalidInputError("encode: RayleighValues needs K >= 1");
      }
      w.u32(static_cast<std::uint32_t>(p.values.size()));
      for (Eigen::Index i = 0; i < p.values.size(); ++i) w.f64(p.values[i]);
      return;
    }
    case MessageKind::kError: {
      const auto& p = std::get<ErrorPayload>(message.body);
      w.u32(static_cast<std::uint32_t>(p.code));
      w.u32(static_cast<std::uint32_t>(p.text.size()));
      w.bytes(p.text.data(), p.text.size());
      return;
    }
  }
  throw InvalidInputError("encode: unknown message kind");
}

}  // namespace

std::vector<std::uint8_t> encode(const Message& message) {
  Writer body;
  encode_body(body, message);
  auto payload = body.take();

  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kProtocolVersion);
  w.u32(static_cast<std::uint32_t>(message.kind()));
  w.u32(message.machine);
  w.u64(payload.size());
  w.bytes(payload.data(), payload.size());
  return w.take();
}

Message decode(const std::vector<std::uint8_t>& buffer) {
  Reader r(buffer);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw DecodeError(0, "bad magic");
  }
  const auto version = r.u32();
  if (version != kProtocolVersion) {
    throw DecodeError(4, "unsupported protocol version " + std::to_string(version));
  }
  const auto kind = r.u32();
  const auto machine = r.u32();
  const auto payload_len = r.u64();
  if (payload_len != r.remaining()) {
    throw DecodeError(r.offset(), "payload length mismatch (declared " +
                                      std::to_string(payload_len) + ", have " +
                                      std::to_string(r.remaining()) + ")");
  }

  Message message;
  message.machine = machine;
  switch (static_cast<MessageKind>(kind)) {
    case MessageKind::kRequestTopK: {
      RequestTopK p;
      p.k = r.u32();
      if (p.k < 1) throw DecodeError(r.offset(), "RequestTopK: K = 0");
      message.body = p;
      break;
    }
    case MessageKind::kFrames: {
      const auto dim = r.u64();
      const auto rank = r.u32();
      const auto n = r.u64();
      Matrix columns = read_matrix(r, dim, rank);
      Vector eigenvalues(rank);
      for (std::uint32_t i = 0; i < rank; ++i) eigenvalues[i] = r.f64();
      try {
        message.body = FramesPayload{estimator::SubspaceEstimate(
            machine, Frame(std::move(columns)), std::move(eigenvalues),
            static_cast<std::int64_t>(n))};
      } catch (const InvalidInputError& e) {
        throw DecodeError(r.offset(), std::string("Frames: ") + e.what());
      }
      break;
    }
    case MessageKind::kBroadcastFrame: {
      const auto dim = r.u64();
      const auto rank = r.u32();
      Matrix columns = read_matrix(r, dim, rank);
      try {
        message.body = BroadcastFramePayload{Frame(std::move(columns))};
      } catch (const InvalidInputError& e) {
        throw DecodeError(r.offset(), std::string("BroadcastFrame: ") + e.what());
      }
      break;
    }
    case MessageKind::kRayleighValues: {
      const auto count = r.u32();
      if (count < 1 || count > (1u << 24)) {
        throw DecodeError(r.offset(), "RayleighValues: bad count");
      }
      Vector values(count);
      for (std::uint32_t i = 0; i < count; ++i) values[i] = r.f64();
      message.body = RayleighValuesPayload{std::move(values)};
      break;
    }
    case MessageKind::kError: {
      ErrorPayload p;
      p.code = static_cast<WireErrorCode>(r.u32());
      const auto len = r.u32();
      if (len != r.remaining()) {
        throw DecodeError(r.offset(), "Error: text length mismatch");
      }
      p.text.resize(len);
      if (len > 0) r.bytes(p.text.data(), len);
      message.body = std::move(p);
      break;
    }
    default:
      throw DecodeError(8, "unknown message kind " + std::to_string(kind));
  }
  if (r.remaining() != 0) {
    throw DecodeError(r.offset(), "trailing bytes after payload");
  }
  return message;
}

}  // namespace dpca::runtime
