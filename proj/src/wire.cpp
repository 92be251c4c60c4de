#include "cgd/wire.hpp"

namespace cgd {

const char* kind_name(MsgKind k) {
    switch (k) {
        case MsgKind::Share: return "SHARE";
        case MsgKind::Partial: return "PARTIAL";
        case MsgKind::Result: return "RESULT";
        case MsgKind::Barrier: return "BARRIER";
    }
    return "?";
}

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

uint16_t get_u16(const uint8_t* p) { return uint16_t(p[0]) << 8 | p[1]; }

uint32_t get_u32(const uint8_t* p) {
    return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 | p[3];
}

}  // namespace

std::vector<uint8_t> encode_frame(const WireMessage& m) {
    std::vector<uint8_t> out;
    out.reserve(4 + kHeaderAfterLength + 4 * m.payload.size());
    put_u32(out, uint32_t(kHeaderAfterLength + 4 * m.payload.size()));
    out.push_back(uint8_t(m.kind));
    put_u32(out, m.round);
    out.push_back(m.layer_tag);
    put_u16(out, m.group_tag);
    put_u16(out, m.sender);
    put_u16(out, m.recipient);
    for (uint32_t e : m.payload) {
        out.push_back(uint8_t(e));
        out.push_back(uint8_t(e >> 8));
        out.push_back(uint8_t(e >> 16));
        out.push_back(uint8_t(e >> 24));
    }
    return out;
}

WireMessage decode_frame(std::span<const uint8_t> bytes) {
    if (bytes.size() < 4 + kHeaderAfterLength) throw WireError("frame too short");
    uint32_t length = get_u32(bytes.data());
    if (length < kHeaderAfterLength) throw WireError("declared length below header size");
    if ((length - kHeaderAfterLength) % 4 != 0) throw WireError("payload not a multiple of 4 bytes");
    if (bytes.size() != size_t(4) + length) throw WireError("frame size does not match declared length");

    const uint8_t* p = bytes.data() + 4;
    uint8_t kind = p[0];
    if (kind < 1 || kind > 4) throw WireError("unknown message kind");

    WireMessage m;
    m.kind = MsgKind(kind);
    m.round = get_u32(p + 1);
    m.layer_tag = p[5];
    m.group_tag = get_u16(p + 6);
    m.sender = get_u16(p + 8);
    m.recipient = get_u16(p + 10);
    size_t n = (length - kHeaderAfterLength) / 4;
    m.payload.resize(n);
    const uint8_t* q = p + kHeaderAfterLength;
    for (size_t i = 0; i < n; ++i, q += 4)
        m.payload[i] = uint32_t(q[0]) | uint32_t(q[1]) << 8 | uint32_t(q[2]) << 16 |
                       uint32_t(q[3]) << 24;
    return m;
}

}  // namespace cgd
