#ifndef HESPLIT_BACKEND_HPP
#define HESPLIT_BACKEND_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hesplit/ckks/scheme.hpp"
#include "hesplit/ckks/serialize.hpp"
#include "hesplit/sim_constants.hpp"

namespace hesplit {

enum class BackendKind { ckks, noise_sim };

BackendKind backend_kind_from_string(const std::string& s);
std::string to_string(BackendKind k);

// noise_sim evaluates exactly in doubles, then quantizes to precision_bits
// and adds zero-mean Gaussian noise after every homomorphic multiplication.
struct NoiseModel {
    double mul_noise_stddev = 0.0;
    int precision_bits = kSimDefaultPrecisionBits;

    static NoiseModel defaults(const ckks::CryptoParams& params) {
        NoiseModel m;
        m.mul_noise_stddev = std::ldexp(1.0, -params.scale_log() + kSimMulNoiseLogOffset);
        return m;
    }
    static NoiseModel exact() { return NoiseModel{0.0, 64}; }
};

struct SimCipher {
    Eigen::VectorXd slots;
    double scale = 0.0;
    int level = 0;
};

// Encrypted value of whichever backend produced it. Operations reject values
// from a different backend kind.
struct CipherValue {
    BackendKind kind = BackendKind::ckks;
    ckks::Ciphertext ct;  // kind == ckks
    SimCipher sim;        // kind == noise_sim

    int level() const { return kind == BackendKind::ckks ? ct.level : sim.level; }
    double scale() const { return kind == BackendKind::ckks ? ct.scale : sim.scale; }
};

// Uniform evaluator over the real scheme or the simulator. Both kinds run the
// same level ledger: every multiplication consumes one level, add/rotate/
// level_drop consume none, renormalize consumes one. Cheap to copy.
class Backend {
public:
    static Backend ckks(const ckks::CryptoParams& params, ckks::PublicMaterial pub,
                        uint64_t seed);
    static Backend noise_sim(const ckks::CryptoParams& params, const NoiseModel& model,
                             uint64_t seed);

    BackendKind kind() const;
    const ckks::CryptoParams& params() const;
    int level_budget() const;
    std::size_t slot_count() const;
    const NoiseModel& noise_model() const;  // noise_sim only

    CipherValue encrypt(const Eigen::VectorXd& values) const;

    CipherValue add(const CipherValue& a, const CipherValue& b) const;
    CipherValue sub(const CipherValue& a, const CipherValue& b) const;
    CipherValue add_plain(const CipherValue& a, const Eigen::VectorXd& values) const;
    CipherValue mul_plain(const CipherValue& a, const Eigen::VectorXd& values) const;
    CipherValue mul_scalar(const CipherValue& a, double s) const;
    // Steered scalar product: the constant is encoded at scale t, so the
    // result lands at a.scale * t / rescale_divisor(a.level).
    CipherValue mul_scalar_at(const CipherValue& a, double s, double t) const;
    CipherValue mul_ct(const CipherValue& a, const CipherValue& b) const;
    CipherValue rotate(const CipherValue& a, int step) const;
    CipherValue level_drop(const CipherValue& a, int target_level) const;
    // Reinterprets the carried value as value*factor by dividing the tracked
    // scale; free of cost and noise.
    CipherValue retag_scale(const CipherValue& a, double factor) const;
    CipherValue renormalize(const CipherValue& a, double target_scale) const;

    // Scale divisor consumed by a multiplication at the given level: the
    // top chain prime for ckks, the nominal scale for the simulator.
    double rescale_divisor(int level) const;

    std::vector<uint8_t> serialize(const CipherValue& v) const;
    CipherValue parse(std::span<const uint8_t> bytes) const;

private:
    struct Impl;
    void apply_sim_noise(SimCipher& c) const;
    std::shared_ptr<Impl> impl_;
};

// Decryption capability; constructed only where the secret key legitimately
// lives (client role, tests).
class Decryptor {
public:
    Decryptor(const Backend& backend, ckks::SecretKey secret);  // ckks
    explicit Decryptor(const Backend& backend);                 // noise_sim

    Eigen::VectorXd decrypt(const CipherValue& v) const;

private:
    Backend backend_;
    std::shared_ptr<const ckks::SecretKey> secret_;
};

}  // namespace hesplit

#endif
