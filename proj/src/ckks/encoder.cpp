#include "hesplit/ckks/encoder.hpp"

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>

#include "hesplit/util/errors.hpp"

namespace hesplit::ckks {

namespace {

using cplx = std::complex<double>;

// Immutable per-ring-size FFT tables: 2N-th roots and the slot index map
// t_j with 5^j mod 2N = 2*t_j + 1.
struct EmbedTables {
    explicit EmbedTables(int log_n) : n(std::size_t{1} << log_n) {
        const std::size_t two_n = 2 * n;
        roots_2n.resize(two_n);
        for (std::size_t k = 0; k < two_n; ++k) {
            const double ang = M_PI * static_cast<double>(k) / static_cast<double>(n);
            roots_2n[k] = cplx(std::cos(ang), std::sin(ang));
        }
        slot_index.resize(n / 2);
        std::size_t pow5 = 1;
        for (std::size_t j = 0; j < n / 2; ++j) {
            slot_index[j] = (pow5 - 1) / 2;
            pow5 = (pow5 * 5) % two_n;
        }
    }

    std::size_t n;
    std::vector<cplx> roots_2n;      // exp(i*pi*k/N), k in [0, 2N)
    std::vector<std::size_t> slot_index;
};

const EmbedTables& tables_for(int log_n) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<EmbedTables>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(log_n);
    if (it == cache.end()) {
        it = cache.emplace(log_n, std::make_unique<EmbedTables>(log_n)).first;
    }
    return *it->second;
}

// In-place radix-2 FFT computing X_j = sum_k x_k * exp(sign * 2*pi*i*j*k/n).
void fft(std::vector<cplx>& a, const EmbedTables& t, int sign) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t stride = 2 * t.n / len;  // index stride into roots_2n
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                cplx w = t.roots_2n[k * stride];
                if (sign < 0) w = std::conj(w);
                const cplx u = a[i + k];
                const cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
}

}  // namespace

Plaintext encode(std::span<const double> values, const CryptoParams& params, int level,
                 double scale) {
    const std::size_t n = params.ring_size();
    const std::size_t slots = params.slot_count();
    if (values.size() > slots) throw DimensionError("encode: more values than slots");
    if (level < 0 || level > params.level_budget()) throw LevelError("encode: bad level");
    if (!(scale > 0)) throw ParamError("encode: scale must be positive");
    const auto& t = tables_for(params.ring_size_log());

    // Evaluations at the odd powers zeta^(2t+1); slot j sits at index t_j and
    // its conjugate at n-1-t_j, which makes the coefficient vector real.
    std::vector<cplx> ev(n, cplx(0, 0));
    for (std::size_t j = 0; j < values.size(); ++j) {
        const std::size_t idx = t.slot_index[j];
        ev[idx] = cplx(values[j], 0);
        ev[n - 1 - idx] = cplx(values[j], 0);
    }
    // p(zeta^(2j+1)) = sum_k (a_k zeta^k) w^(jk): invert the plain DFT, then
    // strip the zeta^k twist.
    fft(ev, t, -1);
    Plaintext pt;
    pt.coeffs.resize(n);
    pt.scale = scale;
    pt.level = level;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const cplx b = ev[k] * inv_n * std::conj(t.roots_2n[k]);
        pt.coeffs[k] = static_cast<i64>(std::llround(b.real() * scale));
    }
    return pt;
}

Plaintext encode(std::span<const double> values, const CryptoParams& params, int level) {
    return encode(values, params, level, params.scale());
}

std::vector<double> decode(const Plaintext& pt, const CryptoParams& params) {
    const std::size_t n = params.ring_size();
    if (pt.coeffs.size() != n) throw DimensionError("decode: coefficient count mismatch");
    const auto& t = tables_for(params.ring_size_log());

    std::vector<cplx> b(n);
    for (std::size_t k = 0; k < n; ++k) {
        b[k] = static_cast<double>(pt.coeffs[k]) * t.roots_2n[k];
    }
    fft(b, t, +1);
    std::vector<double> out(params.slot_count());
    const double inv_scale = 1.0 / pt.scale;
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = b[t.slot_index[j]].real() * inv_scale;
    }
    return out;
}

}  // namespace hesplit::ckks
