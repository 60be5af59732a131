#include "hesplit/protocol/framing.hpp"

#include <cstring>

#include "hesplit/util/errors.hpp"

namespace hesplit {

const char* to_string(MsgType t) {
    switch (t) {
        case MsgType::HELLO: return "HELLO";
        case MsgType::PUBKEYS: return "PUBKEYS";
        case MsgType::ENC_WEIGHTS_ACK: return "ENC_WEIGHTS_ACK";
        case MsgType::FWD_OUT: return "FWD_OUT";
        case MsgType::BOUNDARY_GRAD: return "BOUNDARY_GRAD";
        case MsgType::REFRESH_REQ: return "REFRESH_REQ";
        case MsgType::REFRESH_RESP: return "REFRESH_RESP";
        case MsgType::EPOCH_DONE: return "EPOCH_DONE";
        case MsgType::SHUTDOWN: return "SHUTDOWN";
    }
    return "UNKNOWN";
}

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t get_u32(const uint8_t* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return v;
}

uint64_t get_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<uint8_t> encode_frame(const Frame& f) {
    std::vector<uint8_t> out;
    out.reserve(kFrameHeaderSize + f.payload.size());
    put_u32(out, static_cast<uint32_t>(f.payload.size()));
    out.push_back(static_cast<uint8_t>(f.type));
    put_u64(out, f.session_id);
    put_u64(out, f.sequence);
    out.insert(out.end(), f.payload.begin(), f.payload.end());
    return out;
}

Frame decode_frame(std::span<const uint8_t> bytes) {
    if (bytes.size() < kFrameHeaderSize) throw ParseError("frame: short header");
    Frame f;
    const uint32_t len = get_u32(bytes.data());
    const uint8_t type = bytes[4];
    if (type < 1 || type > 9) throw ParseError("frame: unknown message type");
    f.type = static_cast<MsgType>(type);
    f.session_id = get_u64(bytes.data() + 5);
    f.sequence = get_u64(bytes.data() + 13);
    if (bytes.size() != kFrameHeaderSize + len) throw ParseError("frame: length mismatch");
    f.payload.assign(bytes.begin() + kFrameHeaderSize, bytes.end());
    return f;
}

std::vector<uint8_t> pack_blobs(const std::vector<std::vector<uint8_t>>& blobs) {
    std::vector<uint8_t> out;
    put_u32(out, static_cast<uint32_t>(blobs.size()));
    for (const auto& b : blobs) {
        put_u32(out, static_cast<uint32_t>(b.size()));
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

std::vector<std::vector<uint8_t>> unpack_blobs(std::span<const uint8_t> payload) {
    if (payload.size() < 4) throw ParseError("blob list: short header");
    const uint32_t count = get_u32(payload.data());
    std::vector<std::vector<uint8_t>> out;
    out.reserve(count);
    std::size_t pos = 4;
    for (uint32_t i = 0; i < count; ++i) {
        if (pos + 4 > payload.size()) throw ParseError("blob list: truncated length");
        const uint32_t len = get_u32(payload.data() + pos);
        pos += 4;
        if (pos + len > payload.size()) throw ParseError("blob list: truncated body");
        out.emplace_back(payload.begin() + pos, payload.begin() + pos + len);
        pos += len;
    }
    if (pos != payload.size()) throw ParseError("blob list: trailing bytes");
    return out;
}

}  // namespace hesplit
