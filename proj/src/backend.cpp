#include "hesplit/backend.hpp"

#include <cmath>
#include <cstring>
#include <mutex>

#include "hesplit/util/errors.hpp"
#include "hesplit/util/rng.hpp"

namespace hesplit {

using ckks::CryptoParams;

BackendKind backend_kind_from_string(const std::string& s) {
    if (s == "ckks") return BackendKind::ckks;
    if (s == "noise-sim" || s == "noise_sim") return BackendKind::noise_sim;
    throw ParamError("unknown backend: " + s);
}

std::string to_string(BackendKind k) {
    return k == BackendKind::ckks ? "ckks" : "noise-sim";
}

struct Backend::Impl {
    BackendKind kind;
    CryptoParams params;
    ckks::PublicMaterial pub;  // ckks only
    NoiseModel model;          // noise_sim only
    mutable Rng rng;
    mutable std::mutex rng_mu;

    Impl(BackendKind k, const CryptoParams& p, uint64_t seed)
        : kind(k), params(p), rng(seed) {}
};

namespace {

constexpr double kScaleRelTol = 1e-9;

Eigen::VectorXd quantize(const Eigen::VectorXd& v, int bits) {
    if (bits >= 52) return v;
    const double f = std::ldexp(1.0, bits);
    return (v.array() * f).round() / f;
}

void check_kind(const Backend& b, const CipherValue& v) {
    if (b.kind() != v.kind) {
        throw BackendError("cipher value belongs to a different backend kind");
    }
}

void check_sim_shapes(const SimCipher& a, const SimCipher& b) {
    if (a.level != b.level) throw LevelError("operand levels differ");
    if (std::abs(a.scale - b.scale) > kScaleRelTol * a.scale) {
        throw LevelError("operand scales differ");
    }
}

void check_sim_mul_ready(const SimCipher& a) {
    if (a.level < 1) throw LevelError("multiplicative budget exhausted");
}

void check_mask_size(const Backend& b, const Eigen::VectorXd& values) {
    if (values.size() > static_cast<Eigen::Index>(b.slot_count())) {
        throw DimensionError("plaintext mask exceeds slot count");
    }
}

}  // namespace

Backend Backend::ckks(const CryptoParams& params, ckks::PublicMaterial pub, uint64_t seed) {
    Backend b;
    b.impl_ = std::make_shared<Impl>(BackendKind::ckks, params, seed);
    b.impl_->pub = std::move(pub);
    return b;
}

Backend Backend::noise_sim(const CryptoParams& params, const NoiseModel& model, uint64_t seed) {
    Backend b;
    b.impl_ = std::make_shared<Impl>(BackendKind::noise_sim, params, seed);
    b.impl_->model = model;
    return b;
}

BackendKind Backend::kind() const { return impl_->kind; }
const CryptoParams& Backend::params() const { return impl_->params; }
int Backend::level_budget() const { return impl_->params.level_budget(); }
std::size_t Backend::slot_count() const { return impl_->params.slot_count(); }
const NoiseModel& Backend::noise_model() const { return impl_->model; }

CipherValue Backend::encrypt(const Eigen::VectorXd& values) const {
    if (values.size() > static_cast<Eigen::Index>(slot_count())) {
        throw DimensionError("encrypt: more values than slots");
    }
    CipherValue out;
    out.kind = impl_->kind;
    if (impl_->kind == BackendKind::ckks) {
        std::vector<double> v(values.data(), values.data() + values.size());
        const auto pt = ckks::encode(v, impl_->params, impl_->params.level_budget());
        std::lock_guard<std::mutex> lock(impl_->rng_mu);
        out.ct = ckks::encrypt(pt, impl_->params, impl_->pub, impl_->rng);
    } else {
        out.sim.slots = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(slot_count()));
        out.sim.slots.head(values.size()) = values;
        out.sim.slots = quantize(out.sim.slots, impl_->model.precision_bits);
        out.sim.scale = impl_->params.scale();
        out.sim.level = impl_->params.level_budget();
    }
    return out;
}

CipherValue Backend::add(const CipherValue& a, const CipherValue& b) const {
    check_kind(*this, a);
    check_kind(*this, b);
    CipherValue out;
    out.kind = impl_->kind;
    if (impl_->kind == BackendKind::ckks) {
        out.ct = ckks::add(a.ct, b.ct, impl_->params);
    } else {
        check_sim_shapes(a.sim, b.sim);
        out.sim = a.sim;
        out.sim.slots += b.sim.slots;
    }
    return out;
}

CipherValue Backend::sub(const CipherValue& a, const CipherValue& b) const {
    check_kind(*this, a);
    check_kind(*this, b);
    CipherValue out;
    out.kind = impl_->kind;
    if (impl_->kind == BackendKind::ckks) {
        out.ct = ckks::sub(a.ct, b.ct, impl_->params);
    } else {
        check_sim_shapes(a.sim, b.sim);
        out.sim = a.sim;
        out.sim.slots -= b.sim.slots;
    }
    return out;
}

CipherValue Backend::add_plain(const CipherValue& a, const Eigen::VectorXd& values) const {
    check_kind(*this, a);
    check_mask_size(*this, values);
    CipherValue out;
    out.kind = impl_->kind;
    if (impl_->kind == BackendKind::ckks) {
        std::vector<double> v(values.data(), values.data() + values.size());
        v.resize(slot_count(), 0.0);
        out.ct = ckks::add_plain(a.ct, v, impl_->params);
    } else {
        out.sim = a.sim;
        out.sim.slots.head(values.size()) += values;
    }
    return out;
}

CipherValue Backend::mul_plain(const CipherValue& a, const Eigen::VectorXd& values) const {
    check_kind(*this, a);
    check_mask_size(*this, values);
    CipherValue out;
    out.kind = impl_->kind;
    if (impl_->kind == BackendKind::ckks) {
        std::vector<double> v(values.data(), values.data() + values.size());
        v.resize(slot_count(), 0.0);
        out.ct = ckks::mul_plain(a.ct, v, impl_->params);
    } else {
        check_sim_mul_ready(a.sim);
        out.sim = a.sim;
        Eigen::VectorXd mask = Eigen::VectorXd::Zero(a.sim.slots.size());
        mask.head(values.size()) = values;
        out.sim.slots = a.sim.slots.cwiseProduct(mask);
        out.sim.level -= 1;
        apply_sim_noise(out.sim);
    }
    return out;
}

CipherValue Backend::mul_scalar(const CipherValue& a, double s) const {
    check_kind(*this, a);
    CipherValue out;
    out.kind = impl_->kind;
    if (impl_->kind == BackendKind::ckks) {
        out.ct = ckks::mul_scalar(a.ct, s, impl_->params);
    } else {
        check_sim_mul_ready(a.sim);
        out.sim = a.sim;
        out.sim.slots *= s;
        out.sim.level -= 1;
        apply_sim_noise(out.sim);
    }
    return out;
}

CipherValue Backend::mul_scalar_at(const CipherValue& a, double s, double t) const {
    check_kind(*this, a);
    CipherValue out;
    out.kind = impl_->kind;
    if (impl_->kind == BackendKind::ckks) {
        out.ct = ckks::mul_scalar_at(a.ct, s, t, impl_->params);
    } else {
        check_sim_mul_ready(a.sim);
        out.sim = a.sim;
        out.sim.slots *= s;
        out.sim.level -= 1;
        out.sim.scale = a.sim.scale * t / impl_->params.scale();
        apply_sim_noise(out.sim);
    }
    return out;
}

double Backend::rescale_divisor(int level) const {
    if (impl_->kind == BackendKind::ckks) {
        if (level < 1) throw LevelError("rescale_divisor: no prime to divide at level 0");
        return static_cast<double>(impl_->params.modulus_chain()[level]);
    }
    return impl_->params.scale();
}

CipherValue Backend::mul_ct(const CipherValue& a, const CipherValue& b) const {
    check_kind(*this, a);
    check_kind(*this, b);
    CipherValue out;
    out.kind = impl_->kind;
    if (impl_->kind == BackendKind::ckks) {
        out.ct = ckks::mul_ct(a.ct, b.ct, impl_->params, impl_->pub);
    } else {
        if (a.sim.level != b.sim.level) throw LevelError("operand levels differ");
        check_sim_mul_ready(a.sim);
        out.sim.slots = a.sim.slots.cwiseProduct(b.sim.slots);
        out.sim.level = a.sim.level - 1;
        // Mirror the real scheme's scale arithmetic so ledger trajectories and
        // renormalize decisions agree between backends.
        out.sim.scale = a.sim.scale * b.sim.scale / impl_->params.scale();
        apply_sim_noise(out.sim);
    }
    return out;
}

CipherValue Backend::rotate(const CipherValue& a, int step) const {
    check_kind(*this, a);
    CipherValue out;
    out.kind = impl_->kind;
    if (impl_->kind == BackendKind::ckks) {
        out.ct = ckks::rotate(a.ct, step, impl_->params, impl_->pub);
    } else {
        const Eigen::Index n = a.sim.slots.size();
        const int s = ((step % static_cast<int>(n)) + static_cast<int>(n)) % static_cast<int>(n);
        out.sim = a.sim;
        if (s != 0) {
            out.sim.slots.head(n - s) = a.sim.slots.tail(n - s);
            out.sim.slots.tail(s) = a.sim.slots.head(s);
        }
    }
    return out;
}

CipherValue Backend::level_drop(const CipherValue& a, int target_level) const {
    check_kind(*this, a);
    CipherValue out;
    out.kind = impl_->kind;
    if (impl_->kind == BackendKind::ckks) {
        out.ct = ckks::level_drop(a.ct, target_level, impl_->params);
    } else {
        if (target_level > a.sim.level) throw LevelError("level_drop: target above current level");
        if (target_level < 0) throw LevelError("level_drop: negative target");
        out.sim = a.sim;
        out.sim.level = target_level;
    }
    return out;
}

CipherValue Backend::retag_scale(const CipherValue& a, double factor) const {
    check_kind(*this, a);
    if (!(factor > 0)) throw ParamError("retag_scale: factor must be positive");
    CipherValue out = a;
    if (impl_->kind == BackendKind::ckks) {
        out.ct.scale /= factor;
    } else {
        out.sim.slots *= factor;
        out.sim.scale /= factor;
    }
    return out;
}

CipherValue Backend::renormalize(const CipherValue& a, double target_scale) const {
    check_kind(*this, a);
    CipherValue out;
    out.kind = impl_->kind;
    if (impl_->kind == BackendKind::ckks) {
        out.ct = ckks::renormalize(a.ct, target_scale, impl_->params);
    } else {
        check_sim_mul_ready(a.sim);
        out.sim = a.sim;
        out.sim.level -= 1;
        out.sim.scale = target_scale;
        apply_sim_noise(out.sim);
    }
    return out;
}

void Backend::apply_sim_noise(SimCipher& c) const {
    c.slots = quantize(c.slots, impl_->model.precision_bits);
    if (impl_->model.mul_noise_stddev > 0) {
        std::lock_guard<std::mutex> lock(impl_->rng_mu);
        for (Eigen::Index i = 0; i < c.slots.size(); ++i) {
            c.slots[i] += impl_->model.mul_noise_stddev * impl_->rng.gaussian();
        }
    }
}

namespace {
constexpr char kSimMagic[4] = {'S', 'I', 'M', '1'};
}

std::vector<uint8_t> Backend::serialize(const CipherValue& v) const {
    check_kind(*this, v);
    if (impl_->kind == BackendKind::ckks) {
        return ckks::serialize_ciphertext(v.ct, impl_->params);
    }
    // Simulator payload: magic, level u8, scale f64, count u32, slots f64[].
    std::vector<uint8_t> out;
    out.insert(out.end(), kSimMagic, kSimMagic + 4);
    out.push_back(static_cast<uint8_t>(v.sim.level));
    uint8_t buf[8];
    std::memcpy(buf, &v.sim.scale, 8);
    out.insert(out.end(), buf, buf + 8);
    const uint32_t count = static_cast<uint32_t>(v.sim.slots.size());
    std::memcpy(buf, &count, 4);
    out.insert(out.end(), buf, buf + 4);
    for (Eigen::Index i = 0; i < v.sim.slots.size(); ++i) {
        std::memcpy(buf, &v.sim.slots[i], 8);
        out.insert(out.end(), buf, buf + 8);
    }
    return out;
}

CipherValue Backend::parse(std::span<const uint8_t> bytes) const {
    CipherValue out;
    out.kind = impl_->kind;
    if (impl_->kind == BackendKind::ckks) {
        out.ct = ckks::parse_ciphertext(bytes, impl_->params);
        return out;
    }
    if (bytes.size() < 17 || std::memcmp(bytes.data(), kSimMagic, 4) != 0) {
        throw ParseError("sim cipher blob: bad header");
    }
    out.sim.level = bytes[4];
    std::memcpy(&out.sim.scale, bytes.data() + 5, 8);
    uint32_t count = 0;
    std::memcpy(&count, bytes.data() + 13, 4);
    if (bytes.size() != 17 + std::size_t{count} * 8) {
        throw ParseError("sim cipher blob: truncated body");
    }
    out.sim.slots.resize(count);
    for (uint32_t i = 0; i < count; ++i) {
        std::memcpy(&out.sim.slots[i], bytes.data() + 17 + 8 * std::size_t{i}, 8);
    }
    return out;
}

Decryptor::Decryptor(const Backend& backend, ckks::SecretKey secret)
    : backend_(backend), secret_(std::make_shared<ckks::SecretKey>(std::move(secret))) {
    if (backend_.kind() != BackendKind::ckks) {
        throw BackendError("secret-key decryptor requires the ckks backend");
    }
}

Decryptor::Decryptor(const Backend& backend) : backend_(backend) {
    if (backend_.kind() != BackendKind::noise_sim) {
        throw BackendError("ckks decryptor needs the secret key");
    }
}

Eigen::VectorXd Decryptor::decrypt(const CipherValue& v) const {
    if (v.kind != backend_.kind()) {
        throw BackendError("cipher value belongs to a different backend kind");
    }
    if (backend_.kind() == BackendKind::noise_sim) return v.sim.slots;
    const auto pt = ckks::decrypt(v.ct, backend_.params(), *secret_);
    const auto vals = ckks::decode(pt, backend_.params());
    return Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace hesplit
