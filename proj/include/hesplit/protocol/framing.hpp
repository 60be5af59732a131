#ifndef HESPLIT_PROTOCOL_FRAMING_HPP
#define HESPLIT_PROTOCOL_FRAMING_HPP

#include <cstdint>
#include <span>
#include <vector>

namespace hesplit {

// Wire message types. Byte values are part of the wire format.
enum class MsgType : uint8_t {
    HELLO = 1,
    PUBKEYS = 2,
    ENC_WEIGHTS_ACK = 3,
    FWD_OUT = 4,
    BOUNDARY_GRAD = 5,
    REFRESH_REQ = 6,
    REFRESH_RESP = 7,
    EPOCH_DONE = 8,
    SHUTDOWN = 9,
};

const char* to_string(MsgType t);

// One protocol frame. On the wire:
//   u32 LE payload length | u8 type | u64 LE session id | u64 LE sequence |
//   payload bytes
struct Frame {
    MsgType type = MsgType::HELLO;
    uint64_t session_id = 0;
    uint64_t sequence = 0;
    std::vector<uint8_t> payload;
};

constexpr std::size_t kFrameHeaderSize = 4 + 1 + 8 + 8;

std::vector<uint8_t> encode_frame(const Frame& f);
// Parses one complete frame; throws ParseError on malformed bytes.
Frame decode_frame(std::span<const uint8_t> bytes);

// Payload helpers: multi-ciphertext payloads are u32 count followed by
// u32-length-prefixed blobs.
std::vector<uint8_t> pack_blobs(const std::vector<std::vector<uint8_t>>& blobs);
std::vector<std::vector<uint8_t>> unpack_blobs(std::span<const uint8_t> payload);

}  // namespace hesplit

#endif
