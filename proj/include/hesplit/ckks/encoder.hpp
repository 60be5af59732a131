#ifndef HESPLIT_CKKS_ENCODER_HPP
#define HESPLIT_CKKS_ENCODER_HPP

#include <span>
#include <vector>

#include "hesplit/ckks/poly.hpp"

namespace hesplit::ckks {

// Canonical-embedding encoding: values occupy the N/2 slots addressed through
// the orbit of 5 modulo 2N; decode exposes the real parts. encode rejects
// inputs longer than slot_count; shorter inputs are zero-padded.
Plaintext encode(std::span<const double> values, const CryptoParams& params, int level,
                 double scale);

// Convenience: encode at the params' default scale 2^scale_log.
Plaintext encode(std::span<const double> values, const CryptoParams& params, int level);

std::vector<double> decode(const Plaintext& pt, const CryptoParams& params);

}  // namespace hesplit::ckks

#endif
