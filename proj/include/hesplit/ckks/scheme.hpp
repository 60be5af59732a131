#ifndef HESPLIT_CKKS_SCHEME_HPP
#define HESPLIT_CKKS_SCHEME_HPP

#include <set>
#include <span>

#include "hesplit/ckks/encoder.hpp"
#include "hesplit/ckks/keys.hpp"
#include "hesplit/util/rng.hpp"

namespace hesplit::ckks {

// Key generation for the requested rotation steps (each must lie in
// [1, N/2)). Rotation by steps outside the set is still possible at use time
// through power-of-two composition when those keys exist.
KeyBundle keygen(const CryptoParams& params, const std::set<int>& rotation_steps, Rng& rng);

Ciphertext encrypt(const Plaintext& pt, const CryptoParams& params, const PublicMaterial& pub,
                   Rng& rng);
Plaintext decrypt(const Ciphertext& ct, const CryptoParams& params, const SecretKey& secret);

// Slotwise arithmetic. add/sub require matching level and scale; the
// multiplications rescale eagerly and consume exactly one level.
Ciphertext add(const Ciphertext& a, const Ciphertext& b, const CryptoParams& params);
Ciphertext sub(const Ciphertext& a, const Ciphertext& b, const CryptoParams& params);
Ciphertext negate(const Ciphertext& a, const CryptoParams& params);

// Adds encode(values) at a's exact scale and level; free of level cost.
Ciphertext add_plain(const Ciphertext& a, std::span<const double> values,
                     const CryptoParams& params);

// a ⊙ values. The mask is encoded at the about-to-be-divided prime so the
// result keeps a's scale bit for bit.
Ciphertext mul_plain(const Ciphertext& a, std::span<const double> values,
                     const CryptoParams& params);
// a ⊙ pre-encoded plaintext (pt.level must equal a.level).
Ciphertext mul_plain(const Ciphertext& a, const Plaintext& pt, const CryptoParams& params);
// Encode values so that mul_plain(a, pt) keeps a's scale, for callers that
// reuse one mask many times.
Plaintext encode_for_product(std::span<const double> values, const CryptoParams& params,
                             int level);

// All slots times a scalar; constant-polynomial fast path (no transform).
Ciphertext mul_scalar(const Ciphertext& a, double s, const CryptoParams& params);

// mul_scalar with an explicit encoding scale for the constant, so callers can
// steer the result onto a chosen scale: result scale = a.scale * t / q_level.
Ciphertext mul_scalar_at(const Ciphertext& a, double s, double t, const CryptoParams& params);

// Slotwise ciphertext product with relinearization and eager rescale.
Ciphertext mul_ct(const Ciphertext& a, const Ciphertext& b, const CryptoParams& params,
                  const PublicMaterial& pub);

// Cyclic slot rotation: slot i of the result is slot (i+step mod N/2) of the
// input. Uses the exact key when present, else composes power-of-two keys.
Ciphertext rotate(const Ciphertext& a, int step, const CryptoParams& params,
                  const PublicMaterial& pub);

// Drops to target_level without touching values or scale; no depth consumed.
Ciphertext level_drop(const Ciphertext& a, int target_level, const CryptoParams& params);

// Multiplies by the constant one encoded so the result lands exactly at
// target_scale; consumes one level. Used to align operands for subtraction
// after drifting ciphertext-ciphertext products.
Ciphertext renormalize(const Ciphertext& a, double target_scale, const CryptoParams& params);

}  // namespace hesplit::ckks

#endif
