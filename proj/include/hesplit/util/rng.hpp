#ifndef HESPLIT_UTIL_RNG_HPP
#define HESPLIT_UTIL_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace hesplit {

// Deterministic RNG used everywhere randomness is needed. All sampling is
// implemented on top of raw mt19937_64 draws rather than std:: distributions,
// so sequences are reproducible across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Unbiased uniform integer in [0, bound).
    uint64_t uniform_below(uint64_t bound) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return v % bound;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller (implementation-independent).
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform01();
        } while (u1 <= 1e-300);
        u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Centered binomial with k coin pairs: values in [-k, k], variance k/2.
    int centered_binomial(int k) {
        int acc = 0;
        int remaining = k;
        while (remaining > 0) {
            const int take = remaining < 32 ? remaining : 32;
            const uint64_t mask = take < 32 ? (uint64_t{1} << take) - 1 : 0xFFFFFFFFULL;
            const uint64_t bits = eng_();
            acc += __builtin_popcountll(bits & mask) -
                   __builtin_popcountll((bits >> 32) & mask);
            remaining -= take;
        }
        return acc;
    }

    // Uniform over {-1, 0, 1}.
    int ternary() { return static_cast<int>(uniform_below(3)) - 1; }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stable seed derivation so independent streams (per layer, per role, per
// purpose) never overlap. SplitMix64 finalizer over the combined words.
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace hesplit

#endif
