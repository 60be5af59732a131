#ifndef HESPLIT_CKKS_KEYS_HPP
#define HESPLIT_CKKS_KEYS_HPP

#include <map>
#include <set>

#include "hesplit/ckks/poly.hpp"

namespace hesplit::ckks {

// Secret key: ternary ring element, stored in NTT form over every chain
// prime plus the key-switching prime. Never leaves the client role.
struct SecretKey {
    RnsPoly s;                 // over the full chain
    std::vector<u64> s_special;  // same element mod P
};

// One key-switching key: per-digit pairs (b_j, a_j) over the extended basis.
// digits[j] absorbs the j-th RNS digit of the switched polynomial.
struct KswKey {
    std::vector<std::pair<ExtPoly, ExtPoly>> digits;
};

// Everything the evaluating party needs: encryption key, relinearization key
// and rotation keys. Contains no secret material by construction.
struct PublicMaterial {
    RnsPoly pk0, pk1;  // full chain, NTT form
    KswKey relin;
    std::map<int, KswKey> rotation;  // left-rotation step -> key

    bool has_rotation(int step) const { return rotation.count(step) != 0; }
};

struct KeyBundle {
    PublicMaterial pub;
    SecretKey secret;
};

// Power-of-two steps in [1, N/4]: the set the packed kernels rely on.
std::set<int> default_rotation_steps(const CryptoParams& params);

}  // namespace hesplit::ckks

#endif
