#pragma once

// Frame layout, all header integers big-endian, payload little-endian u32s:
//   u32 length   (bytes after this field: 12 header bytes + 4*payload_len)
//   u8  kind
//   u32 round
//   u8  layer_tag
//   u16 group_tag (0 = global scope)
//   u16 sender
//   u16 recipient
//   u32 payload[...]

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cgd/ring.hpp"

namespace cgd {

enum class MsgKind : uint8_t { Share = 1, Partial = 2, Result = 3, Barrier = 4 };

const char* kind_name(MsgKind k);

struct WireMessage {
    MsgKind kind = MsgKind::Barrier;
    uint32_t round = 0;
    uint8_t layer_tag = 0;
    uint16_t group_tag = 0;
    uint16_t sender = 0;
    uint16_t recipient = 0;
    RingVec payload;

    bool operator==(const WireMessage&) const = default;
};

struct WireError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr size_t kHeaderAfterLength = 12;

std::vector<uint8_t> encode_frame(const WireMessage& m);

// Decodes one complete frame (including the length prefix). Throws WireError
// on malformed input.
WireMessage decode_frame(std::span<const uint8_t> bytes);

}  // namespace cgd
