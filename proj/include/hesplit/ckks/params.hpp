#ifndef HESPLIT_CKKS_PARAMS_HPP
#define HESPLIT_CKKS_PARAMS_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hesplit/ckks/ntt.hpp"

namespace hesplit::ckks {

// Ring and modulus-chain description for the leveled scheme over
// Z[X]/(X^N + 1). The chain is derived from a total modulus-bit budget:
// a wide base prime (decryption headroom), L rescaling primes of scale_log
// bits chosen as close to 2^scale_log as possible, and one wide special
// prime reserved for key switching. The level budget L is always derived
// from the budget, never supplied.
class CryptoParams {
public:
    // log_qp is the bound on the summed bit sizes of every prime in use
    // (ciphertext chain plus the key-switching prime).
    static CryptoParams make(int ring_size_log, int log_qp, int scale_log,
                             double noise_stddev = 3.2);

    // The two evaluation parameter sets (N=2^14/logQP=438 and
    // N=2^13/logQP=218, both with scale 2^30).
    static CryptoParams set1();
    static CryptoParams set2();

    int ring_size_log() const { return ring_size_log_; }
    std::size_t ring_size() const { return std::size_t{1} << ring_size_log_; }
    std::size_t slot_count() const { return ring_size() / 2; }
    int scale_log() const { return scale_log_; }
    double scale() const { return scale_; }
    double noise_stddev() const { return noise_stddev_; }
    int log_qp_budget() const { return log_qp_; }

    // Rescalable depth: the chain holds level_budget()+1 ciphertext primes.
    int level_budget() const { return static_cast<int>(modulus_chain_.size()) - 1; }
    const std::vector<u64>& modulus_chain() const { return modulus_chain_; }
    u64 special_prime() const { return special_prime_; }

    const NttTables& tables(std::size_t chain_index) const { return *tables_[chain_index]; }
    const NttTables& special_tables() const { return *special_tables_; }

    // Precomputed q_j^{-1} mod q_i for rescaling from chain index j.
    u64 chain_prime_inv(std::size_t j, std::size_t i) const { return rescale_inv_[j][i]; }
    // Precomputed P^{-1} mod q_i for key-switch mod-down.
    u64 special_inv(std::size_t i) const { return special_inv_[i]; }

    // Total bits actually used by the chain plus the special prime.
    int total_modulus_bits() const { return total_bits_; }

    // Stable identity for caches and config digests.
    std::string fingerprint() const;

    bool operator==(const CryptoParams& o) const {
        return modulus_chain_ == o.modulus_chain_ && special_prime_ == o.special_prime_ &&
               ring_size_log_ == o.ring_size_log_ && scale_log_ == o.scale_log_;
    }

private:
    CryptoParams() = default;

    int ring_size_log_ = 0;
    int log_qp_ = 0;
    int scale_log_ = 0;
    double scale_ = 0.0;
    double noise_stddev_ = 3.2;
    int total_bits_ = 0;
    std::vector<u64> modulus_chain_;  // q_0 (wide), q_1..q_L (scale-sized)
    u64 special_prime_ = 0;
    std::vector<std::shared_ptr<const NttTables>> tables_;
    std::shared_ptr<const NttTables> special_tables_;
    std::vector<std::vector<u64>> rescale_inv_;
    std::vector<u64> special_inv_;
};

}  // namespace hesplit::ckks

#endif
