#pragma once

#include "dpca/estimator.hpp"
#include "dpca/types.hpp"

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace dpca::runtime {

// Wire format, little-endian throughout:
//   magic "DPCM" | u32 version | u32 kind | u32 machine | u64 payload bytes
// followed by the payload. Frame values travel as float64 in column-major
// order, so a round trip is bit-exact.

enum class MessageKind : std::uint32_t {
  kRequestTopK = 1,
  kFrames = 2,
  kBroadcastFrame = 3,
  kRayleighValues = 4,
  kError = 5,
};

struct RequestTopK {
  std::uint32_t k = 0;
};

struct FramesPayload {
  estimator::SubspaceEstimate estimate;
};

struct BroadcastFramePayload {
  Frame frame;
};

struct RayleighValuesPayload {
  Vector values;  // length K >= 1
};

enum class WireErrorCode : std::uint32_t {
  kInvalidK = 1,
  kMalformed = 2,
  kInternal = 3,
};

struct ErrorPayload {
  WireErrorCode code = WireErrorCode::kInternal;
  std::string text;
};

struct Message {
  std::uint32_t machine = 0;
  std::variant<RequestTopK, FramesPayload, BroadcastFramePayload,
               RayleighValuesPayload, ErrorPayload>
      body;

  MessageKind kind() const {
    return static_cast<MessageKind>(body.index() + 1);
  }
};

inline constexpr std::uint32_t kProtocolVersion = 1;
inline constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4 + 8;

// Throws InvalidInputError for unencodable messages (e.g. empty Rayleigh
// vector); never produces a buffer decode() would reject.
std::vector<std::uint8_t> encode(const Message& message);

// Throws DecodeError (with the offending offset) on truncated or corrupt
// buffers, including trailing garbage.
Message decode(const std::vector<std::uint8_t>& buffer);

}  // namespace dpca::runtime
