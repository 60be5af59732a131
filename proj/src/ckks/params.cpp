#include "hesplit/ckks/params.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hesplit/util/errors.hpp"

namespace hesplit::ckks {

namespace {

constexpr int kWidePrimeBits = 60;  // base prime and key-switch prime width

// Finds NTT-friendly primes (≡ 1 mod 2N) of the given bit size, nearest to
// 2^bits, skipping any already taken. Alternating above/below the target
// keeps the running scale drift of ciphertext-ciphertext products small.
std::vector<u64> find_primes_near(int bits, std::size_t two_n, std::size_t count,
                                  std::vector<u64>& taken) {
    const u64 target = u64{1} << bits;
    std::vector<u64> found;
    u64 up = target + 1;      // candidates ≡ 1 mod 2N above the target
    u64 down = target + 1;    // and below
    up += (two_n - (up - 1) % two_n) % two_n;
    down -= (down - 1) % two_n;
    if (down > target) down -= two_n;
    bool try_up = true;
    while (found.size() < count) {
        u64 cand;
        if (try_up) {
            cand = up;
            up += two_n;
        } else {
            cand = down;
            if (down < two_n) throw ParamError("prime search underflow");
            down -= two_n;
        }
        try_up = !try_up;
        if (!is_prime_u64(cand)) continue;
        if (std::find(taken.begin(), taken.end(), cand) != taken.end()) continue;
        found.push_back(cand);
        taken.push_back(cand);
    }
    return found;
}

}  // namespace

CryptoParams CryptoParams::make(int ring_size_log, int log_qp, int scale_log,
                                double noise_stddev) {
    if (ring_size_log < 10) throw ParamError("ring_size_log must be at least 10");
    if (scale_log < 20 || scale_log > 50) throw ParamError("scale_log out of range");
    // Budget: wide base prime + wide special prime + L scale-sized primes.
    const int fixed = 2 * kWidePrimeBits;
    if (log_qp < fixed + scale_log) throw ParamError("logQP budget too small for one level");

    CryptoParams p;
    p.ring_size_log_ = ring_size_log;
    p.log_qp_ = log_qp;
    p.scale_log_ = scale_log;
    p.scale_ = std::ldexp(1.0, scale_log);
    p.noise_stddev_ = noise_stddev;

    const int levels = (log_qp - fixed) / scale_log;
    const std::size_t two_n = std::size_t{2} << ring_size_log;

    std::vector<u64> taken;
    const u64 base = find_primes_near(kWidePrimeBits, two_n, 1, taken)[0];
    const u64 special = find_primes_near(kWidePrimeBits, two_n, 1, taken)[0];
    const auto scale_primes =
        find_primes_near(scale_log, two_n, static_cast<std::size_t>(levels), taken);

    p.modulus_chain_.push_back(base);
    for (u64 q : scale_primes) p.modulus_chain_.push_back(q);
    p.special_prime_ = special;
    p.total_bits_ = 2 * kWidePrimeBits + levels * scale_log;

    for (u64 q : p.modulus_chain_) {
        p.tables_.push_back(std::make_shared<NttTables>(q, ring_size_log));
    }
    p.special_tables_ = std::make_shared<NttTables>(special, ring_size_log);

    const std::size_t chain_len = p.modulus_chain_.size();
    p.rescale_inv_.assign(chain_len, std::vector<u64>(chain_len, 0));
    for (std::size_t j = 0; j < chain_len; ++j) {
        for (std::size_t i = 0; i < chain_len; ++i) {
            if (i == j) continue;
            p.rescale_inv_[j][i] =
                inv_mod(p.modulus_chain_[j] % p.modulus_chain_[i], p.modulus_chain_[i]);
        }
    }
    p.special_inv_.resize(chain_len);
    for (std::size_t i = 0; i < chain_len; ++i) {
        p.special_inv_[i] = inv_mod(special % p.modulus_chain_[i], p.modulus_chain_[i]);
    }
    return p;
}

CryptoParams CryptoParams::set1() { return make(14, 438, 30); }

CryptoParams CryptoParams::set2() { return make(13, 218, 30); }

std::string CryptoParams::fingerprint() const {
    std::ostringstream os;
    os << "N" << ring_size_log_ << ".S" << scale_log_ << ".Q";
    for (u64 q : modulus_chain_) os << q << ".";
    os << "P" << special_prime_;
    return os.str();
}

}  // namespace hesplit::ckks
