#include "hesplit/ckks/serialize.hpp"

#include <cmath>
#include <cstring>

#include "hesplit/util/errors.hpp"

namespace hesplit::ckks {

namespace {
constexpr char kMagic[4] = {'C', 'K', 'K', '1'};
constexpr std::size_t kHeaderSize = 8;

void put_u64(std::vector<uint8_t>& out, u64 v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

u64 get_u64(const uint8_t* p) {
    u64 v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<u64>(p[i]) << (8 * i);
    return v;
}
}  // namespace

std::size_t ciphertext_byte_size(const CryptoParams& params, int level) {
    return kHeaderSize + 2 * static_cast<std::size_t>(level + 1) * params.ring_size() * 8;
}

std::vector<uint8_t> serialize_ciphertext(const Ciphertext& ct, const CryptoParams& params) {
    std::vector<uint8_t> out;
    out.reserve(ciphertext_byte_size(params, ct.level));
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(static_cast<uint8_t>(params.ring_size_log()));
    out.push_back(static_cast<uint8_t>(ct.level));
    out.push_back(static_cast<uint8_t>(std::llround(std::log2(ct.scale))));
    out.push_back(2);  // body polynomial count
    for (const RnsPoly* part : {&ct.c0, &ct.c1}) {
        for (const auto& limb : part->limbs) {
            for (u64 w : limb) put_u64(out, w);
        }
    }
    return out;
}

Ciphertext parse_ciphertext(std::span<const uint8_t> bytes, const CryptoParams& params) {
    if (bytes.size() < kHeaderSize) throw ParseError("ciphertext blob: short header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError("ciphertext blob: bad magic");
    const int ring_log = bytes[4];
    const int level = bytes[5];
    const int scale_log = bytes[6];
    const int poly_count = bytes[7];
    if (ring_log != params.ring_size_log()) throw ParseError("ciphertext blob: ring mismatch");
    if (level < 0 || level > params.level_budget()) throw ParseError("ciphertext blob: bad level");
    if (poly_count != 2) throw ParseError("ciphertext blob: unsupported polynomial count");
    const std::size_t expect = ciphertext_byte_size(params, level);
    if (bytes.size() != expect) throw ParseError("ciphertext blob: truncated body");

    Ciphertext ct;
    ct.level = level;
    ct.scale = std::ldexp(1.0, scale_log);
    ct.slot_count = params.slot_count();
    const uint8_t* p = bytes.data() + kHeaderSize;
    const std::size_t n = params.ring_size();
    for (RnsPoly* part : {&ct.c0, &ct.c1}) {
        part->limbs.resize(level + 1);
        for (int i = 0; i <= level; ++i) {
            part->limbs[i].resize(n);
            for (std::size_t k = 0; k < n; ++k, p += 8) part->limbs[i][k] = get_u64(p);
        }
    }
    return ct;
}

}  // namespace hesplit::ckks

namespace hesplit::ckks {

namespace {

constexpr char kKeyMagic[4] = {'K', 'E', 'Y', '1'};

void put_limbs(std::vector<uint8_t>& out, const std::vector<std::vector<u64>>& limbs) {
    for (const auto& limb : limbs) {
        for (u64 w : limb) {
            for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(w >> (8 * i)));
        }
    }
}

void put_vec(std::vector<uint8_t>& out, const std::vector<u64>& limb) {
    for (u64 w : limb) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(w >> (8 * i)));
    }
}

struct Reader {
    const uint8_t* p;
    const uint8_t* end;
    u64 get_u64() {
        if (p + 8 > end) throw ParseError("key blob: truncated");
        u64 v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<u64>(p[i]) << (8 * i);
        p += 8;
        return v;
    }
    void get_limbs(std::vector<std::vector<u64>>& limbs, std::size_t count, std::size_t n) {
        limbs.resize(count);
        for (auto& limb : limbs) {
            limb.resize(n);
            for (auto& w : limb) w = get_u64();
        }
    }
    void get_vec(std::vector<u64>& limb, std::size_t n) {
        limb.resize(n);
        for (auto& w : limb) w = get_u64();
    }
};

void put_ksw(std::vector<uint8_t>& out, const KswKey& k) {
    for (const auto& [b, a] : k.digits) {
        put_limbs(out, b.q_limbs);
        put_vec(out, b.p_limb);
        put_limbs(out, a.q_limbs);
        put_vec(out, a.p_limb);
    }
}

KswKey read_ksw(Reader& r, std::size_t chain_len, std::size_t n) {
    KswKey k;
    k.digits.resize(chain_len);
    for (auto& [b, a] : k.digits) {
        r.get_limbs(b.q_limbs, chain_len, n);
        r.get_vec(b.p_limb, n);
        r.get_limbs(a.q_limbs, chain_len, n);
        r.get_vec(a.p_limb, n);
    }
    return k;
}

}  // namespace

std::vector<uint8_t> serialize_public_material(const PublicMaterial& pub,
                                               const CryptoParams& params) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kKeyMagic, kKeyMagic + 4);
    out.push_back(static_cast<uint8_t>(params.ring_size_log()));
    out.push_back(static_cast<uint8_t>(params.modulus_chain().size()));
    const uint16_t rot = static_cast<uint16_t>(pub.rotation.size());
    out.push_back(static_cast<uint8_t>(rot & 0xff));
    out.push_back(static_cast<uint8_t>(rot >> 8));
    put_limbs(out, pub.pk0.limbs);
    put_limbs(out, pub.pk1.limbs);
    put_ksw(out, pub.relin);
    for (const auto& [step, key] : pub.rotation) {
        const uint32_t s = static_cast<uint32_t>(step);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(s >> (8 * i)));
        put_ksw(out, key);
    }
    return out;
}

PublicMaterial parse_public_material(std::span<const uint8_t> bytes,
                                     const CryptoParams& params) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kKeyMagic, 4) != 0) {
        throw ParseError("key blob: bad magic");
    }
    if (bytes[4] != params.ring_size_log()) throw ParseError("key blob: ring mismatch");
    const std::size_t chain_len = bytes[5];
    if (chain_len != params.modulus_chain().size()) throw ParseError("key blob: chain mismatch");
    const uint16_t rot = static_cast<uint16_t>(bytes[6] | (bytes[7] << 8));
    Reader r{bytes.data() + 8, bytes.data() + bytes.size()};
    const std::size_t n = params.ring_size();
    PublicMaterial pub;
    r.get_limbs(pub.pk0.limbs, chain_len, n);
    r.get_limbs(pub.pk1.limbs, chain_len, n);
    pub.relin = read_ksw(r, chain_len, n);
    for (uint16_t i = 0; i < rot; ++i) {
        if (r.p + 4 > r.end) throw ParseError("key blob: truncated rotation step");
        uint32_t s = 0;
        for (int k = 0; k < 4; ++k) s |= static_cast<uint32_t>(r.p[k]) << (8 * k);
        r.p += 4;
        pub.rotation.emplace(static_cast<int>(s), read_ksw(r, chain_len, n));
    }
    if (r.p != r.end) throw ParseError("key blob: trailing bytes");
    return pub;
}

}  // namespace hesplit::ckks
