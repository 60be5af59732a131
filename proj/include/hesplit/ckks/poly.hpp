#ifndef HESPLIT_CKKS_POLY_HPP
#define HESPLIT_CKKS_POLY_HPP

#include <cstdint>
#include <vector>

#include "hesplit/ckks/params.hpp"

namespace hesplit::ckks {

// Ring element in RNS form over chain limbs 0..level. All scheme internals
// keep limbs in NTT (evaluation) representation; conversions happen inside
// operations that need coefficient access.
struct RnsPoly {
    std::vector<std::vector<u64>> limbs;  // limbs[i] has ring_size entries, mod q_i

    std::size_t limb_count() const { return limbs.size(); }
    bool empty() const { return limbs.empty(); }
};

// Ring element over the extended basis {q_0..q_l, P}; used only inside key
// switching.
struct ExtPoly {
    std::vector<std::vector<u64>> q_limbs;
    std::vector<u64> p_limb;
};

// Encoded message: signed coefficients of the integer polynomial round(scale *
// embedding^-1(values)), independent of any modulus.
struct Plaintext {
    std::vector<i64> coeffs;
    double scale = 0.0;
    int level = 0;
};

// RLWE ciphertext. level == limbs-1 on both body polynomials; scale tracks the
// exact encoding factor of the carried message.
struct Ciphertext {
    RnsPoly c0, c1;
    double scale = 0.0;
    int level = 0;
    std::size_t slot_count = 0;
};

}  // namespace hesplit::ckks

#endif
