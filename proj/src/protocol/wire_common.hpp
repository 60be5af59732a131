#ifndef HESPLIT_SRC_PROTOCOL_WIRE_COMMON_HPP
#define HESPLIT_SRC_PROTOCOL_WIRE_COMMON_HPP

#include <json.hpp>
#include <string>
#include <vector>

#include "hesplit/config.hpp"
#include "hesplit/protocol/framing.hpp"
#include "hesplit/protocol/transport.hpp"
#include "hesplit/util/digest.hpp"
#include "hesplit/util/errors.hpp"

namespace hesplit::wire {

using nlohmann::json;

// Lock-step framed channel with strictly increasing per-direction sequence
// numbers and a session id both parties derive from the config digest.
class Channel {
public:
    Channel(Transport& t, uint64_t session_id) : t_(t), session_id_(session_id) {}

    void send(MsgType type, std::vector<uint8_t> payload = {}) {
        Frame f;
        f.type = type;
        f.session_id = session_id_;
        f.sequence = ++send_seq_;
        f.payload = std::move(payload);
        t_.send(f);
    }

    Frame recv_any() {
        Frame f = t_.recv();
        if (f.session_id != session_id_) throw ProtocolError("frame for a different session");
        if (f.sequence <= last_recv_seq_) throw ProtocolError("sequence number not increasing");
        last_recv_seq_ = f.sequence;
        return f;
    }

    Frame recv(MsgType expect) {
        Frame f = recv_any();
        if (f.type != expect) {
            throw ProtocolError(std::string("expected ") + to_string(expect) + ", got " +
                                to_string(f.type));
        }
        return f;
    }

    uint64_t bytes_sent() const { return t_.bytes_sent(); }
    uint64_t bytes_received() const { return t_.bytes_received(); }

private:
    Transport& t_;
    uint64_t session_id_;
    uint64_t send_seq_ = 0;
    uint64_t last_recv_seq_ = 0;
};

inline uint64_t session_id_from_digest(const std::array<uint8_t, 32>& digest) {
    uint64_t id = 0;
    for (int i = 0; i < 8; ++i) id |= static_cast<uint64_t>(digest[i]) << (8 * i);
    return id;
}

// Payload = u32 LE json length, json bytes, then a packed blob list.
inline std::vector<uint8_t> payload_with_header(const json& header,
                                                const std::vector<std::vector<uint8_t>>& blobs) {
    const std::string h = header.dump();
    std::vector<uint8_t> out;
    const uint32_t len = static_cast<uint32_t>(h.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(len >> (8 * i)));
    out.insert(out.end(), h.begin(), h.end());
    const auto b = pack_blobs(blobs);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

inline std::pair<json, std::vector<std::vector<uint8_t>>> split_payload(
    std::span<const uint8_t> payload) {
    if (payload.size() < 4) throw ParseError("payload: short header");
    uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<uint32_t>(payload[i]) << (8 * i);
    if (payload.size() < 4 + len) throw ParseError("payload: truncated json header");
    json header;
    try {
        header = json::parse(payload.begin() + 4, payload.begin() + 4 + len);
    } catch (const json::exception& e) {
        throw ParseError(std::string("payload header: ") + e.what());
    }
    auto blobs = unpack_blobs(payload.subspan(4 + len));
    return {std::move(header), std::move(blobs)};
}

// Group layout of the dense sample packing at the split boundary: block_len
// slots per sample, samples_per_ct samples per ciphertext.
struct DensePack {
    int block_len = 0;       // strict pow2 of the boundary size, capped at slots
    int samples_per_ct = 0;  // >= 1
    int boundary = 0;

    static DensePack layout(int boundary, int slots) {
        DensePack d;
        d.boundary = boundary;
        d.block_len = std::min(strict_next_pow2(boundary), slots);
        if (boundary > slots) {
            throw DimensionError("boundary layer wider than the slot count");
        }
        d.samples_per_ct = std::max(1, slots / d.block_len);
        return d;
    }
    int groups(int batch) const { return (batch + samples_per_ct - 1) / samples_per_ct; }
};

}  // namespace hesplit::wire

#endif
