#include "hesplit/ckks/ntt.hpp"

#include "hesplit/util/errors.hpp"

namespace hesplit::ckks {

namespace {

u64 reverse_bits(u64 v, int bits) {
    u64 r = 0;
    for (int i = 0; i < bits; ++i) {
        r = (r << 1) | (v & 1);
        v >>= 1;
    }
    return r;
}

// Smallest primitive 2n-th root of unity mod q.
u64 find_primitive_root(u64 q, std::size_t two_n) {
    const u64 group_order = q - 1;
    if (group_order % two_n != 0) throw ParamError("prime not NTT friendly");
    const u64 cofactor = group_order / two_n;
    for (u64 g = 2;; ++g) {
        const u64 cand = pow_mod(g, cofactor, q);
        // cand has order dividing 2n; primitive iff cand^n = -1.
        if (pow_mod(cand, two_n / 2, q) == q - 1) return cand;
    }
}

}  // namespace

NttTables::NttTables(u64 q, int log_n) : q_(q), log_n_(log_n), n_(std::size_t{1} << log_n) {
    const u64 psi = find_primitive_root(q, 2 * n_);
    const u64 psi_inv = inv_mod(psi, q);

    psi_rev_.resize(n_);
    psi_rev_shoup_.resize(n_);
    psi_inv_rev_.resize(n_);
    psi_inv_rev_shoup_.resize(n_);

    u64 p = 1, pi = 1;
    for (std::size_t i = 0; i < n_; ++i) {
        const std::size_t r = reverse_bits(i, log_n_);
        psi_rev_[r] = p;
        psi_inv_rev_[r] = pi;
        p = mul_mod(p, psi, q);
        pi = mul_mod(pi, psi_inv, q);
    }
    for (std::size_t i = 0; i < n_; ++i) {
        psi_rev_shoup_[i] = shoup_precompute(psi_rev_[i], q);
        psi_inv_rev_shoup_[i] = shoup_precompute(psi_inv_rev_[i], q);
    }
    n_inv_ = inv_mod(n_ % q, q);
    n_inv_shoup_ = shoup_precompute(n_inv_, q);
}

// Cooley-Tukey butterflies, bit-reversed twiddle order (Longa-Naehrig).
void NttTables::forward(std::span<u64> a) const {
    std::size_t t = n_;
    for (std::size_t m = 1; m < n_; m <<= 1) {
        t >>= 1;
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t j1 = 2 * i * t;
            const u64 w = psi_rev_[m + i];
            const u64 ws = psi_rev_shoup_[m + i];
            for (std::size_t j = j1; j < j1 + t; ++j) {
                const u64 u = a[j];
                const u64 v = mul_mod_shoup(a[j + t], w, ws, q_);
                a[j] = add_mod(u, v, q_);
                a[j + t] = sub_mod(u, v, q_);
            }
        }
    }
}

// Gentleman-Sande butterflies followed by n^-1 scaling.
void NttTables::inverse(std::span<u64> a) const {
    std::size_t t = 1;
    for (std::size_t m = n_; m > 1; m >>= 1) {
        const std::size_t h = m >> 1;
        std::size_t j1 = 0;
        for (std::size_t i = 0; i < h; ++i) {
            const u64 w = psi_inv_rev_[h + i];
            const u64 ws = psi_inv_rev_shoup_[h + i];
            for (std::size_t j = j1; j < j1 + t; ++j) {
                const u64 u = a[j];
                const u64 v = a[j + t];
                a[j] = add_mod(u, v, q_);
                a[j + t] = mul_mod_shoup(sub_mod(u, v, q_), w, ws, q_);
            }
            j1 += 2 * t;
        }
        t <<= 1;
    }
    for (auto& x : a) x = mul_mod_shoup(x, n_inv_, n_inv_shoup_, q_);
}

}  // namespace hesplit::ckks
