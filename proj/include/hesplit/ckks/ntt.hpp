#ifndef HESPLIT_CKKS_NTT_HPP
#define HESPLIT_CKKS_NTT_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "hesplit/ckks/modmath.hpp"

namespace hesplit::ckks {

// Negacyclic NTT over Z_q[X]/(X^n + 1) for one prime q with q ≡ 1 (mod 2n).
// Precomputes powers of the primitive 2n-th root of unity in bit-reversed
// order with Shoup companions. Immutable after construction.
class NttTables {
public:
    NttTables(u64 q, int log_n);

    u64 modulus() const { return q_; }
    int log_n() const { return log_n_; }
    std::size_t n() const { return n_; }

    // In-place transforms between coefficient and evaluation representation.
    void forward(std::span<u64> a) const;
    void inverse(std::span<u64> a) const;

private:
    u64 q_;
    int log_n_;
    std::size_t n_;
    std::vector<u64> psi_rev_, psi_rev_shoup_;          // forward twiddles
    std::vector<u64> psi_inv_rev_, psi_inv_rev_shoup_;  // inverse twiddles
    u64 n_inv_, n_inv_shoup_;
};

}  // namespace hesplit::ckks

#endif
