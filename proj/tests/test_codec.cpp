#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dpca/codec.hpp"
#include "dpca/models.hpp"

#include <cstring>

using namespace dpca;
using namespace dpca::runtime;

namespace {

Message frames_message(std::uint64_t seed = 1) {
  const Frame frame = models::random_frame(8, 3, seed);
  Vector eigenvalues(3);
  eigenvalues << 5.0, 2.5, 1.25;
  return Message{4, FramesPayload{estimator::SubspaceEstimate(
                        4, frame, eigenvalues, 100)}};
}

}  // namespace

TEST_CASE("frames round trip bit exactly") {
  const Message original = frames_message();
  const auto bytes = encode(original);
  const Message decoded = decode(bytes);
  REQUIRE(decoded.kind() == MessageKind::kFrames);
  const auto& est = std::get<FramesPayload>(decoded.body).estimate;
  const auto& ref = std::get<FramesPayload>(original.body).estimate;
  CHECK(decoded.machine == original.machine);
  CHECK(est.sample_count == ref.sample_count);
  CHECK((est.frame.data().array() == ref.frame.data().array()).all());
  CHECK((est.local_eigenvalues.array() == ref.local_eigenvalues.array()).all());
  // Re-encoding is byte-identical.
  CHECK(encode(decoded) == bytes);
}

TEST_CASE("every message kind round trips") {
  const Message request{2, RequestTopK{7}};
  CHECK(std::get<RequestTopK>(decode(encode(request)).body).k == 7);

  const Message broadcast{0, BroadcastFramePayload{models::random_frame(6, 2, 3)}};
  const Message broadcast_rt = decode(encode(broadcast));
  CHECK((std::get<BroadcastFramePayload>(broadcast_rt.body).frame.data().array() ==
         std::get<BroadcastFramePayload>(broadcast.body).frame.data().array())
            .all());

  Vector values(2);
  values << 3.5, 1.5;
  const Message rayleigh{1, RayleighValuesPayload{values}};
  CHECK((std::get<RayleighValuesPayload>(decode(encode(rayleigh)).body)
             .values.array() == values.array())
            .all());

  const Message error{3, ErrorPayload{WireErrorCode::kInvalidK, "K too large"}};
  const auto decoded = decode(encode(error));
  CHECK(std::get<ErrorPayload>(decoded.body).text == "K too large");
}

TEST_CASE("empty rayleigh vectors are unencodable") {
  const Message bad{1, RayleighValuesPayload{Vector()}};
  CHECK_THROWS_AS(encode(bad), InvalidInputError);
  const Message bad_request{1, RequestTopK{0}};
  CHECK_THROWS_AS(encode(bad_request), InvalidInputError);
}

TEST_CASE("any single-byte truncation fails to decode") {
  for (const Message& message :
       {frames_message(), Message{2, RequestTopK{3}},
        Message{0, BroadcastFramePayload{models::random_frame(4, 2, 9)}},
        Message{1, ErrorPayload{WireErrorCode::kMalformed, "x"}}}) {
    const auto bytes = encode(message);
    for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
      std::vector<std::uint8_t> truncated(bytes.begin(),
                                          bytes.begin() + cut);
      CHECK_THROWS_AS(decode(truncated), DecodeError);
    }
    // Trailing garbage is rejected too.
    auto extended = bytes;
    extended.push_back(0);
    CHECK_THROWS_AS(decode(extended), DecodeError);
  }
}

TEST_CASE("corrupt headers are rejected with an offset") {
  auto bytes = encode(frames_message());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode(bad_magic), DecodeError);

  auto bad_version = bytes;
  bad_version[4] = 99;
  try {
    decode(bad_version);
    FAIL("expected DecodeError");
  } catch (const DecodeError& e) {
    CHECK(e.offset() == 4);
  }

  auto bad_kind = bytes;
  bad_kind[8] = 77;
  CHECK_THROWS_AS(decode(bad_kind), DecodeError);
}

TEST_CASE("non-orthonormal frame payloads are rejected") {
  auto bytes = encode(frames_message());
  // Scale one float in the frame payload region.
  const std::size_t frame_start = kHeaderBytes + 8 + 4 + 8;
  const double value = 2.0;  // no orthonormal column can carry this entry
  std::memcpy(bytes.data() + frame_start, &value, 8);
  CHECK_THROWS_AS(decode(bytes), DecodeError);
}
