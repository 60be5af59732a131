#ifndef HESPLIT_CKKS_MODMATH_HPP
#define HESPLIT_CKKS_MODMATH_HPP

#include <cstdint>

namespace hesplit::ckks {

using u64 = uint64_t;
using u128 = unsigned __int128;
using i64 = int64_t;

inline u64 add_mod(u64 a, u64 b, u64 q) {
    u64 s = a + b;
    return s >= q ? s - q : s;
}

inline u64 sub_mod(u64 a, u64 b, u64 q) { return a >= b ? a - b : a + q - b; }

inline u64 neg_mod(u64 a, u64 q) { return a == 0 ? 0 : q - a; }

inline u64 mul_mod(u64 a, u64 b, u64 q) {
    return static_cast<u64>((u128)a * b % q);
}

// Shoup multiplication: b fixed, b_shoup = floor(b * 2^64 / q).
inline u64 shoup_precompute(u64 b, u64 q) {
    return static_cast<u64>(((u128)b << 64) / q);
}

inline u64 mul_mod_shoup(u64 a, u64 b, u64 b_shoup, u64 q) {
    const u64 hi = static_cast<u64>(((u128)a * b_shoup) >> 64);
    u64 r = a * b - hi * q;  // wraps mod 2^64, result < 2q
    return r >= q ? r - q : r;
}

inline u64 pow_mod(u64 base, u64 exp, u64 q) {
    u64 r = 1;
    base %= q;
    while (exp) {
        if (exp & 1) r = mul_mod(r, base, q);
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    return r;
}

inline u64 inv_mod(u64 a, u64 q) { return pow_mod(a, q - 2, q); }  // q prime

// Deterministic Miller-Rabin, valid for all 64-bit inputs.
inline bool is_prime_u64(u64 n) {
    if (n < 2) return false;
    for (u64 p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
        if (n % p == 0) return n == p;
    }
    u64 d = n - 1;
    int s = 0;
    while ((d & 1) == 0) {
        d >>= 1;
        ++s;
    }
    for (u64 a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
        u64 x = pow_mod(a, d, n);
        if (x == 1 || x == n - 1) continue;
        bool witness = true;
        for (int r = 1; r < s; ++r) {
            x = mul_mod(x, x, n);
            if (x == n - 1) {
                witness = false;
                break;
            }
        }
        if (witness) return false;
    }
    return true;
}

// Signed centered representative in (-q/2, q/2].
inline i64 center(u64 a, u64 q) {
    return a > q / 2 ? static_cast<i64>(a) - static_cast<i64>(q) : static_cast<i64>(a);
}

// Reduce a signed value into [0, q).
inline u64 reduce_signed(i64 a, u64 q) {
    i64 r = a % static_cast<i64>(q);
    if (r < 0) r += static_cast<i64>(q);
    return static_cast<u64>(r);
}

}  // namespace hesplit::ckks

#endif
