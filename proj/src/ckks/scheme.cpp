#include "hesplit/ckks/scheme.hpp"

#include <algorithm>
#include <cmath>

#include "hesplit/util/errors.hpp"

namespace hesplit::ckks {

namespace {

constexpr double kScaleRelTol = 1e-9;

std::vector<u64> signed_to_limb(const std::vector<i64>& coeffs, u64 q) {
    std::vector<u64> out(coeffs.size());
    for (std::size_t i = 0; i < coeffs.size(); ++i) out[i] = reduce_signed(coeffs[i], q);
    return out;
}

// Small signed polynomial (secret/noise/message) lifted to NTT limbs
// 0..level, plus optionally the special prime.
RnsPoly lift_signed(const std::vector<i64>& coeffs, const CryptoParams& p, int level) {
    RnsPoly out;
    out.limbs.resize(level + 1);
    for (int i = 0; i <= level; ++i) {
        out.limbs[i] = signed_to_limb(coeffs, p.modulus_chain()[i]);
        p.tables(i).forward(out.limbs[i]);
    }
    return out;
}

std::vector<i64> sample_ternary(std::size_t n, Rng& rng) {
    std::vector<i64> v(n);
    for (auto& x : v) x = rng.ternary();
    return v;
}

std::vector<i64> sample_noise(std::size_t n, double sigma, Rng& rng) {
    const int k = std::max(1, static_cast<int>(std::lround(2.0 * sigma * sigma)));
    std::vector<i64> v(n);
    for (auto& x : v) x = rng.centered_binomial(k);
    return v;
}

RnsPoly uniform_poly(const CryptoParams& p, int level, Rng& rng) {
    RnsPoly out;
    out.limbs.resize(level + 1);
    for (int i = 0; i <= level; ++i) {
        const u64 q = p.modulus_chain()[i];
        out.limbs[i].resize(p.ring_size());
        for (auto& x : out.limbs[i]) x = rng.uniform_below(q);
    }
    return out;
}

void add_into(std::vector<u64>& a, const std::vector<u64>& b, u64 q) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = add_mod(a[i], b[i], q);
}

void sub_into(std::vector<u64>& a, const std::vector<u64>& b, u64 q) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = sub_mod(a[i], b[i], q);
}

std::vector<u64> mul_limbs(const std::vector<u64>& a, const std::vector<u64>& b, u64 q) {
    std::vector<u64> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = mul_mod(a[i], b[i], q);
    return out;
}

void mul_into(std::vector<u64>& a, const std::vector<u64>& b, u64 q) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = mul_mod(a[i], b[i], q);
}

void scalar_mul_into(std::vector<u64>& a, u64 s, u64 q) {
    const u64 ss = shoup_precompute(s, q);
    for (auto& x : a) x = mul_mod_shoup(x, s, ss, q);
}

RnsPoly poly_add(const RnsPoly& a, const RnsPoly& b, const CryptoParams& p) {
    RnsPoly out = a;
    for (std::size_t i = 0; i < out.limbs.size(); ++i) {
        add_into(out.limbs[i], b.limbs[i], p.modulus_chain()[i]);
    }
    return out;
}

RnsPoly poly_sub(const RnsPoly& a, const RnsPoly& b, const CryptoParams& p) {
    RnsPoly out = a;
    for (std::size_t i = 0; i < out.limbs.size(); ++i) {
        sub_into(out.limbs[i], b.limbs[i], p.modulus_chain()[i]);
    }
    return out;
}

RnsPoly poly_mul(const RnsPoly& a, const RnsPoly& b, const CryptoParams& p) {
    RnsPoly out;
    out.limbs.resize(a.limbs.size());
    for (std::size_t i = 0; i < a.limbs.size(); ++i) {
        out.limbs[i] = mul_limbs(a.limbs[i], b.limbs[i], p.modulus_chain()[i]);
    }
    return out;
}

RnsPoly poly_neg(const RnsPoly& a, const CryptoParams& p) {
    RnsPoly out = a;
    for (std::size_t i = 0; i < out.limbs.size(); ++i) {
        const u64 q = p.modulus_chain()[i];
        for (auto& x : out.limbs[i]) x = neg_mod(x, q);
    }
    return out;
}

void check_same_shape(const Ciphertext& a, const Ciphertext& b) {
    if (a.level != b.level) throw LevelError("operand levels differ");
    if (std::abs(a.scale - b.scale) > kScaleRelTol * a.scale) {
        throw LevelError("operand scales differ");
    }
}

void check_mul_ready(const Ciphertext& a) {
    if (a.level < 1) throw LevelError("multiplicative budget exhausted");
}

// Divide both body polynomials by the top chain prime with rounding; level
// and scale drop accordingly.
void rescale_inplace(Ciphertext& ct, const CryptoParams& p) {
    const int lvl = ct.level;
    const u64 q_top = p.modulus_chain()[lvl];
    for (RnsPoly* part : {&ct.c0, &ct.c1}) {
        std::vector<u64> top = part->limbs[lvl];
        p.tables(lvl).inverse(top);
        std::vector<i64> centered(top.size());
        for (std::size_t i = 0; i < top.size(); ++i) centered[i] = center(top[i], q_top);
        for (int i = 0; i < lvl; ++i) {
            const u64 q = p.modulus_chain()[i];
            std::vector<u64> corr = signed_to_limb(centered, q);
            p.tables(i).forward(corr);
            sub_into(part->limbs[i], corr, q);
            scalar_mul_into(part->limbs[i], p.chain_prime_inv(lvl, i), q);
        }
        part->limbs.pop_back();
    }
    ct.level -= 1;
    ct.scale /= static_cast<double>(q_top);
}

// Key-switch d (NTT form, limbs 0..level) against key: returns the pair to
// add to (c0, c1). Digit decomposition over the chain primes with one wide
// special prime; rounding by the centered residue mod P.
std::pair<RnsPoly, RnsPoly> keyswitch(const RnsPoly& d, int level, const KswKey& key,
                                      const CryptoParams& p) {
    const std::size_t n = p.ring_size();
    const u64 qp = p.special_prime();

    ExtPoly acc0, acc1;
    acc0.q_limbs.assign(level + 1, std::vector<u64>(n, 0));
    acc1.q_limbs.assign(level + 1, std::vector<u64>(n, 0));
    acc0.p_limb.assign(n, 0);
    acc1.p_limb.assign(n, 0);

    for (int j = 0; j <= level; ++j) {
        std::vector<u64> digit = d.limbs[j];
        p.tables(j).inverse(digit);
        const auto& [kb, ka] = key.digits[j];
        for (int i = 0; i <= level; ++i) {
            const u64 q = p.modulus_chain()[i];
            std::vector<u64> lifted(n);
            for (std::size_t t = 0; t < n; ++t) lifted[t] = digit[t] % q;
            p.tables(i).forward(lifted);
            std::vector<u64> t0 = mul_limbs(lifted, kb.q_limbs[i], q);
            add_into(acc0.q_limbs[i], t0, q);
            mul_into(lifted, ka.q_limbs[i], q);
            add_into(acc1.q_limbs[i], lifted, q);
        }
        std::vector<u64> lifted(n);
        for (std::size_t t = 0; t < n; ++t) lifted[t] = digit[t] % qp;
        p.special_tables().forward(lifted);
        std::vector<u64> t0 = mul_limbs(lifted, kb.p_limb, qp);
        add_into(acc0.p_limb, t0, qp);
        mul_into(lifted, ka.p_limb, qp);
        add_into(acc1.p_limb, lifted, qp);
    }

    // Mod-down: subtract the centered P-residue, then divide by P.
    RnsPoly out0, out1;
    out0.limbs.resize(level + 1);
    out1.limbs.resize(level + 1);
    for (int part = 0; part < 2; ++part) {
        ExtPoly& acc = part == 0 ? acc0 : acc1;
        RnsPoly& out = part == 0 ? out0 : out1;
        std::vector<u64> r = acc.p_limb;
        p.special_tables().inverse(r);
        std::vector<i64> r_centered(n);
        for (std::size_t t = 0; t < n; ++t) r_centered[t] = center(r[t], qp);
        for (int i = 0; i <= level; ++i) {
            const u64 q = p.modulus_chain()[i];
            std::vector<u64> corr = signed_to_limb(r_centered, q);
            p.tables(i).forward(corr);
            sub_into(acc.q_limbs[i], corr, q);
            scalar_mul_into(acc.q_limbs[i], p.special_inv(i), q);
            out.limbs[i] = std::move(acc.q_limbs[i]);
        }
    }
    return {std::move(out0), std::move(out1)};
}

// Negacyclic automorphism X -> X^g applied in coefficient domain.
RnsPoly apply_automorphism(const RnsPoly& a, u64 g, const CryptoParams& p) {
    const std::size_t n = p.ring_size();
    const std::size_t two_n = 2 * n;
    RnsPoly out;
    out.limbs.resize(a.limbs.size());
    for (std::size_t i = 0; i < a.limbs.size(); ++i) {
        const u64 q = p.modulus_chain()[i];
        std::vector<u64> coeffs = a.limbs[i];
        p.tables(i).inverse(coeffs);
        std::vector<u64> moved(n, 0);
        std::size_t idx = 0;  // k*g mod 2N, updated incrementally
        for (std::size_t k = 0; k < n; ++k) {
            const u64 v = coeffs[k];
            if (idx < n) {
                moved[idx] = v;
            } else {
                moved[idx - n] = neg_mod(v, q);
            }
            idx = (idx + g) % two_n;
        }
        p.tables(i).forward(moved);
        out.limbs[i] = std::move(moved);
    }
    return out;
}

u64 galois_element(int step, std::size_t two_n) {
    u64 g = 1;
    for (int i = 0; i < step; ++i) g = (g * 5) % two_n;
    return g;
}

// Key for switching a polynomial decrypted under source_secret back to sk.s.
// Digit j carries P*T_j*source_secret with T_j the CRT unit of q_j, which
// reduces to [P]_{q_j}*source_secret on limb j and vanishes elsewhere.
KswKey make_ksw_key(const RnsPoly& source_secret, const SecretKey& sk, const CryptoParams& p,
                    Rng& rng) {
    const std::size_t n = p.ring_size();
    const std::size_t chain_len = p.modulus_chain().size();
    const u64 qp = p.special_prime();
    KswKey key;
    key.digits.resize(chain_len);
    for (std::size_t j = 0; j < chain_len; ++j) {
        ExtPoly b, a;
        b.q_limbs.resize(chain_len);
        a.q_limbs.resize(chain_len);
        const auto noise = sample_noise(n, p.noise_stddev(), rng);
        for (std::size_t i = 0; i < chain_len; ++i) {
            const u64 q = p.modulus_chain()[i];
            a.q_limbs[i].resize(n);
            for (auto& x : a.q_limbs[i]) x = rng.uniform_below(q);
            // b = -a*s + e (+ [P]_q * source_secret on the matching digit)
            std::vector<u64> acc = mul_limbs(a.q_limbs[i], sk.s.limbs[i], q);
            for (auto& x : acc) x = neg_mod(x, q);
            std::vector<u64> e = signed_to_limb(noise, q);
            p.tables(i).forward(e);
            add_into(acc, e, q);
            if (i == j) {
                std::vector<u64> term = source_secret.limbs[i];
                scalar_mul_into(term, qp % q, q);
                add_into(acc, term, q);
            }
            b.q_limbs[i] = std::move(acc);
        }
        a.p_limb.resize(n);
        for (auto& x : a.p_limb) x = rng.uniform_below(qp);
        std::vector<u64> acc = mul_limbs(a.p_limb, sk.s_special, qp);
        for (auto& x : acc) x = neg_mod(x, qp);
        std::vector<u64> e = signed_to_limb(noise, qp);
        p.special_tables().forward(e);
        add_into(acc, e, qp);
        b.p_limb = std::move(acc);
        key.digits[j] = {std::move(b), std::move(a)};
    }
    return key;
}

}  // namespace

std::set<int> default_rotation_steps(const CryptoParams& params) {
    std::set<int> steps;
    for (std::size_t s = 1; s <= params.ring_size() / 4; s <<= 1) {
        steps.insert(static_cast<int>(s));
    }
    return steps;
}

KeyBundle keygen(const CryptoParams& params, const std::set<int>& rotation_steps, Rng& rng) {
    const std::size_t n = params.ring_size();
    const std::size_t two_n = 2 * n;
    const int top = params.level_budget();
    for (int s : rotation_steps) {
        if (s < 1 || s >= static_cast<int>(params.slot_count())) {
            throw KeyError("rotation step out of range [1, N/2)");
        }
    }

    KeyBundle kb;
    const auto s_coeffs = sample_ternary(n, rng);
    kb.secret.s = lift_signed(s_coeffs, params, top);
    kb.secret.s_special = signed_to_limb(s_coeffs, params.special_prime());
    params.special_tables().forward(kb.secret.s_special);

    // pk = (-a*s + e, a) over the full chain.
    kb.pub.pk1 = uniform_poly(params, top, rng);
    const auto e = sample_noise(n, params.noise_stddev(), rng);
    kb.pub.pk0.limbs.resize(top + 1);
    for (int i = 0; i <= top; ++i) {
        const u64 q = params.modulus_chain()[i];
        std::vector<u64> acc = mul_limbs(kb.pub.pk1.limbs[i], kb.secret.s.limbs[i], q);
        for (auto& x : acc) x = neg_mod(x, q);
        std::vector<u64> en = signed_to_limb(e, q);
        params.tables(i).forward(en);
        add_into(acc, en, q);
        kb.pub.pk0.limbs[i] = std::move(acc);
    }

    // Relinearization: switch s^2 back to s.
    RnsPoly s_sq = poly_mul(kb.secret.s, kb.secret.s, params);
    kb.pub.relin = make_ksw_key(s_sq, kb.secret, params, rng);

    // Rotation keys: switch s(X^g) back to s.
    for (int step : rotation_steps) {
        const u64 g = galois_element(step, two_n);
        RnsPoly s_g = apply_automorphism(kb.secret.s, g, params);
        kb.pub.rotation.emplace(step, make_ksw_key(s_g, kb.secret, params, rng));
    }
    return kb;
}

Ciphertext encrypt(const Plaintext& pt, const CryptoParams& params, const PublicMaterial& pub,
                   Rng& rng) {
    const std::size_t n = params.ring_size();
    if (pt.coeffs.size() != n) throw ParamError("encrypt: plaintext/ring mismatch");
    if (pub.pk0.limbs.size() != params.modulus_chain().size()) {
        throw KeyError("encrypt: key does not match parameter chain");
    }
    const int level = pt.level;
    Ciphertext ct;
    ct.scale = pt.scale;
    ct.level = level;
    ct.slot_count = params.slot_count();

    const RnsPoly v = lift_signed(sample_ternary(n, rng), params, level);
    const RnsPoly e0 = lift_signed(sample_noise(n, params.noise_stddev(), rng), params, level);
    const RnsPoly e1 = lift_signed(sample_noise(n, params.noise_stddev(), rng), params, level);
    const RnsPoly m = lift_signed(pt.coeffs, params, level);

    ct.c0.limbs.resize(level + 1);
    ct.c1.limbs.resize(level + 1);
    for (int i = 0; i <= level; ++i) {
        const u64 q = params.modulus_chain()[i];
        std::vector<u64> c0 = mul_limbs(v.limbs[i], pub.pk0.limbs[i], q);
        add_into(c0, e0.limbs[i], q);
        add_into(c0, m.limbs[i], q);
        std::vector<u64> c1 = mul_limbs(v.limbs[i], pub.pk1.limbs[i], q);
        add_into(c1, e1.limbs[i], q);
        ct.c0.limbs[i] = std::move(c0);
        ct.c1.limbs[i] = std::move(c1);
    }
    return ct;
}

Plaintext decrypt(const Ciphertext& ct, const CryptoParams& params, const SecretKey& secret) {
    if (secret.s.limbs.size() < ct.c0.limbs.size()) {
        throw KeyError("decrypt: secret key chain too short");
    }
    // m + e has coefficients far below q_0, so the centered base-limb residue
    // recovers the signed value exactly.
    const u64 q0 = params.modulus_chain()[0];
    std::vector<u64> acc = mul_limbs(ct.c1.limbs[0], secret.s.limbs[0], q0);
    add_into(acc, ct.c0.limbs[0], q0);
    params.tables(0).inverse(acc);
    Plaintext pt;
    pt.coeffs.resize(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) pt.coeffs[i] = center(acc[i], q0);
    pt.scale = ct.scale;
    pt.level = ct.level;
    return pt;
}

Ciphertext add(const Ciphertext& a, const Ciphertext& b, const CryptoParams& params) {
    check_same_shape(a, b);
    Ciphertext out = a;
    out.c0 = poly_add(a.c0, b.c0, params);
    out.c1 = poly_add(a.c1, b.c1, params);
    return out;
}

Ciphertext sub(const Ciphertext& a, const Ciphertext& b, const CryptoParams& params) {
    check_same_shape(a, b);
    Ciphertext out = a;
    out.c0 = poly_sub(a.c0, b.c0, params);
    out.c1 = poly_sub(a.c1, b.c1, params);
    return out;
}

Ciphertext negate(const Ciphertext& a, const CryptoParams& params) {
    Ciphertext out = a;
    out.c0 = poly_neg(a.c0, params);
    out.c1 = poly_neg(a.c1, params);
    return out;
}

Ciphertext add_plain(const Ciphertext& a, std::span<const double> values,
                     const CryptoParams& params) {
    const Plaintext pt = encode(values, params, a.level, a.scale);
    Ciphertext out = a;
    for (int i = 0; i <= a.level; ++i) {
        const u64 q = params.modulus_chain()[i];
        std::vector<u64> m = signed_to_limb(pt.coeffs, q);
        params.tables(i).forward(m);
        add_into(out.c0.limbs[i], m, q);
    }
    return out;
}

Plaintext encode_for_product(std::span<const double> values, const CryptoParams& params,
                             int level) {
    if (level < 1) throw LevelError("encode_for_product: level must be >= 1");
    return encode(values, params, level,
                  static_cast<double>(params.modulus_chain()[level]));
}

Ciphertext mul_plain(const Ciphertext& a, const Plaintext& pt, const CryptoParams& params) {
    check_mul_ready(a);
    if (pt.level != a.level) throw LevelError("mul_plain: plaintext level mismatch");
    Ciphertext out = a;
    for (int i = 0; i <= a.level; ++i) {
        const u64 q = params.modulus_chain()[i];
        std::vector<u64> m = signed_to_limb(pt.coeffs, q);
        params.tables(i).forward(m);
        mul_into(out.c0.limbs[i], m, q);
        mul_into(out.c1.limbs[i], m, q);
    }
    out.scale = a.scale * pt.scale;
    rescale_inplace(out, params);
    return out;
}

Ciphertext mul_plain(const Ciphertext& a, std::span<const double> values,
                     const CryptoParams& params) {
    check_mul_ready(a);
    return mul_plain(a, encode_for_product(values, params, a.level), params);
}

Ciphertext mul_scalar(const Ciphertext& a, double s, const CryptoParams& params) {
    check_mul_ready(a);
    const u64 q_top = params.modulus_chain()[a.level];
    const i64 c = std::llround(s * static_cast<double>(q_top));
    Ciphertext out = a;
    for (int i = 0; i <= a.level; ++i) {
        const u64 q = params.modulus_chain()[i];
        const u64 cq = reduce_signed(c, q);
        scalar_mul_into(out.c0.limbs[i], cq, q);
        scalar_mul_into(out.c1.limbs[i], cq, q);
    }
    out.scale = a.scale * static_cast<double>(q_top);
    rescale_inplace(out, params);
    return out;
}

Ciphertext mul_scalar_at(const Ciphertext& a, double s, double t, const CryptoParams& params) {
    check_mul_ready(a);
    if (!(t > 0)) throw ParamError("mul_scalar_at: encode scale must be positive");
    const i64 c = std::llround(s * t);
    Ciphertext out = a;
    for (int i = 0; i <= a.level; ++i) {
        const u64 q = params.modulus_chain()[i];
        const u64 cq = reduce_signed(c, q);
        scalar_mul_into(out.c0.limbs[i], cq, q);
        scalar_mul_into(out.c1.limbs[i], cq, q);
    }
    out.scale = a.scale * t;
    rescale_inplace(out, params);
    return out;
}

Ciphertext mul_ct(const Ciphertext& a, const Ciphertext& b, const CryptoParams& params,
                  const PublicMaterial& pub) {
    // Scales may differ (the product's scale is their quotient-tracked
    // product); only the limb structure must line up.
    if (a.level != b.level) throw LevelError("operand levels differ");
    check_mul_ready(a);
    check_mul_ready(b);
    const int lvl = a.level;
    RnsPoly d0 = poly_mul(a.c0, b.c0, params);
    RnsPoly d1 = poly_add(poly_mul(a.c0, b.c1, params), poly_mul(a.c1, b.c0, params), params);
    RnsPoly d2 = poly_mul(a.c1, b.c1, params);

    auto [u0, u1] = keyswitch(d2, lvl, pub.relin, params);
    Ciphertext out;
    out.c0 = poly_add(d0, u0, params);
    out.c1 = poly_add(d1, u1, params);
    out.scale = a.scale * b.scale;
    out.level = lvl;
    out.slot_count = a.slot_count;
    rescale_inplace(out, params);
    return out;
}

Ciphertext rotate(const Ciphertext& a, int step, const CryptoParams& params,
                  const PublicMaterial& pub) {
    const int slots = static_cast<int>(params.slot_count());
    int s = ((step % slots) + slots) % slots;
    if (s == 0) return a;

    // Greedy decomposition into available keys: exact key first, then
    // power-of-two pieces.
    Ciphertext cur = a;
    while (s > 0) {
        int piece = 0;
        if (pub.has_rotation(s)) {
            piece = s;
        } else {
            for (int b = 30; b >= 0; --b) {
                const int cand = 1 << b;
                if (cand <= s && pub.has_rotation(cand)) {
                    piece = cand;
                    break;
                }
            }
        }
        if (piece == 0) throw KeyError("rotate: no key material for requested step");
        const u64 g = galois_element(piece, 2 * params.ring_size());
        RnsPoly c0g = apply_automorphism(cur.c0, g, params);
        RnsPoly c1g = apply_automorphism(cur.c1, g, params);
        auto [u0, u1] = keyswitch(c1g, cur.level, pub.rotation.at(piece), params);
        Ciphertext next;
        next.c0 = poly_add(c0g, u0, params);
        next.c1 = std::move(u1);
        next.scale = cur.scale;
        next.level = cur.level;
        next.slot_count = cur.slot_count;
        cur = std::move(next);
        s -= piece;
    }
    return cur;
}

Ciphertext level_drop(const Ciphertext& a, int target_level, const CryptoParams& params) {
    (void)params;
    if (target_level > a.level) throw LevelError("level_drop: target above current level");
    if (target_level < 0) throw LevelError("level_drop: negative target");
    Ciphertext out = a;
    out.c0.limbs.resize(target_level + 1);
    out.c1.limbs.resize(target_level + 1);
    out.level = target_level;
    return out;
}

Ciphertext renormalize(const Ciphertext& a, double target_scale, const CryptoParams& params) {
    check_mul_ready(a);
    const u64 q_top = params.modulus_chain()[a.level];
    const double t = target_scale * static_cast<double>(q_top) / a.scale;
    const i64 c = std::llround(t);
    Ciphertext out = a;
    for (int i = 0; i <= a.level; ++i) {
        const u64 q = params.modulus_chain()[i];
        const u64 cq = reduce_signed(c, q);
        scalar_mul_into(out.c0.limbs[i], cq, q);
        scalar_mul_into(out.c1.limbs[i], cq, q);
    }
    out.scale = a.scale * static_cast<double>(c);
    rescale_inplace(out, params);
    out.scale = target_scale;  // exact by construction up to the integer rounding of t
    return out;
}

}  // namespace hesplit::ckks
