#ifndef HESPLIT_CKKS_SERIALIZE_HPP
#define HESPLIT_CKKS_SERIALIZE_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "hesplit/ckks/keys.hpp"
#include "hesplit/ckks/poly.hpp"

namespace hesplit::ckks {

// Ciphertext blob layout (little-endian):
//   magic "CKK1" | ring_size_log u8 | level u8 | scale_log u8 | poly_count u8
// followed by the RNS coefficient words (u64) of each polynomial, one prime
// after another, in stored (NTT) order. scale_log is the rounded log2 of the
// exact scale; parsing reconstructs scale = 2^scale_log.
std::vector<uint8_t> serialize_ciphertext(const Ciphertext& ct, const CryptoParams& params);
Ciphertext parse_ciphertext(std::span<const uint8_t> bytes, const CryptoParams& params);

// Serialized size for a ciphertext at the given level.
std::size_t ciphertext_byte_size(const CryptoParams& params, int level);

// Evaluation-key material for the wire (encryption, relinearization and
// rotation keys; no secret parts).
std::vector<uint8_t> serialize_public_material(const PublicMaterial& pub,
                                               const CryptoParams& params);
PublicMaterial parse_public_material(std::span<const uint8_t> bytes, const CryptoParams& params);

}  // namespace hesplit::ckks

#endif
