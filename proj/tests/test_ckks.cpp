#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "hesplit/ckks/scheme.hpp"
#include "hesplit/ckks/serialize.hpp"
#include "hesplit/util/errors.hpp"

using namespace hesplit;
using namespace hesplit::ckks;

namespace {

// Small ring for fast unit tests; Set 2 is exercised where the contract
// explicitly names it.
CryptoParams test_params() { return CryptoParams::make(11, 180, 30); }

std::vector<double> random_slots(std::size_t count, Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
    std::vector<double> v(count);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("parameter chains stay within the budget and derive the level count") {
    const auto p2 = CryptoParams::set2();
    CHECK(p2.ring_size_log() == 13);
    CHECK(p2.slot_count() == 4096);
    CHECK(p2.total_modulus_bits() <= 218);
    CHECK(p2.level_budget() == 3);  // (218 - 2*60) / 30

    const auto p1 = CryptoParams::set1();
    CHECK(p1.slot_count() == 8192);
    CHECK(p1.total_modulus_bits() <= 438);
    CHECK(p1.level_budget() == 10);  // (438 - 2*60) / 30

    for (std::size_t i = 0; i < p2.modulus_chain().size(); ++i) {
        CHECK(is_prime_u64(p2.modulus_chain()[i]));
        CHECK(p2.modulus_chain()[i] % (2 * p2.ring_size()) == 1);
    }
    CHECK_THROWS_AS(CryptoParams::make(9, 218, 30), ParamError);
}

TEST_CASE("encode/decode round trip") {
    const auto p = test_params();
    Rng rng(7);

    SUBCASE("all zeros decode exactly") {
        std::vector<double> zeros(p.slot_count(), 0.0);
        const auto pt = encode(zeros, p, p.level_budget());
        const auto back = decode(pt, p);
        for (double v : back) CHECK(v == 0.0);
    }
    SUBCASE("single one in slot zero") {
        std::vector<double> v(1, 1.0);
        const auto back = decode(encode(v, p, p.level_budget()), p);
        CHECK(std::abs(back[0] - 1.0) < 1e-6);
        for (std::size_t i = 1; i < back.size(); ++i) CHECK(std::abs(back[i]) < 1e-6);
    }
    SUBCASE("random vectors under the scheme precision bound") {
        for (int rep = 0; rep < 20; ++rep) {
            const auto v = random_slots(p.slot_count(), rng);
            const auto back = decode(encode(v, p, p.level_budget()), p);
            CHECK(max_abs_diff(v, back) < std::ldexp(1.0, -p.scale_log() + 6));
        }
    }
    SUBCASE("over-long input rejected") {
        std::vector<double> v(p.slot_count() + 1, 0.0);
        CHECK_THROWS_AS(encode(v, p, p.level_budget()), DimensionError);
    }
}

TEST_CASE("keygen emits exactly the requested rotation keys") {
    const auto p = test_params();
    Rng rng(1);
    SUBCASE("empty step set") {
        const auto kb = keygen(p, {}, rng);
        CHECK(kb.pub.rotation.empty());
    }
    SUBCASE("power-of-two default set") {
        const auto steps = default_rotation_steps(p);
        // steps 1..N/4 inclusive
        CHECK(steps.size() == static_cast<std::size_t>(p.ring_size_log() - 1));
        const auto kb = keygen(p, steps, rng);
        CHECK(kb.pub.rotation.size() == steps.size());
    }
    SUBCASE("step at N/2 rejected") {
        CHECK_THROWS_AS(keygen(p, {static_cast<int>(p.slot_count())}, rng), KeyError);
    }
}

TEST_CASE("encrypt/decrypt round trip") {
    const auto p = test_params();
    Rng rng(42);
    const auto kb = keygen(p, {}, rng);

    SUBCASE("zeros") {
        std::vector<double> zeros(p.slot_count(), 0.0);
        const auto ct = encrypt(encode(zeros, p, p.level_budget()), p, kb.pub, rng);
        CHECK(ct.level == p.level_budget());
        const auto back = decode(decrypt(ct, p, kb.secret), p);
        CHECK(max_abs_diff(zeros, back) < 1e-4);
    }
    SUBCASE("random uniform vectors") {
        for (int rep = 0; rep < 10; ++rep) {
            const auto v = random_slots(p.slot_count(), rng);
            const auto ct = encrypt(encode(v, p, p.level_budget()), p, kb.pub, rng);
            const auto back = decode(decrypt(ct, p, kb.secret), p);
            CHECK(max_abs_diff(v, back) < 1e-4);
        }
    }
    SUBCASE("wrong secret key yields unrelated values") {
        const auto v = random_slots(p.slot_count(), rng);
        const auto ct = encrypt(encode(v, p, p.level_budget()), p, kb.pub, rng);
        const auto other = keygen(p, {}, rng);
        const auto back = decode(decrypt(ct, p, other.secret), p);
        // Correlation with the message should be negligible.
        double dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            dot += v[i] * back[i];
            na += v[i] * v[i];
            nb += back[i] * back[i];
        }
        CHECK(std::abs(dot) / (std::sqrt(na) * std::sqrt(nb) + 1e-12) < 0.1);
    }
}

TEST_CASE("homomorphic addition") {
    const auto p = test_params();
    Rng rng(3);
    const auto kb = keygen(p, {}, rng);
    const auto v = random_slots(p.slot_count(), rng);
    const auto w = random_slots(p.slot_count(), rng);
    const auto cv = encrypt(encode(v, p, p.level_budget()), p, kb.pub, rng);
    const auto cw = encrypt(encode(w, p, p.level_budget()), p, kb.pub, rng);

    SUBCASE("v + (-v) is zero") {
        const auto zero = add(cv, negate(cv, p), p);
        const auto back = decode(decrypt(zero, p, kb.secret), p);
        for (double x : back) CHECK(std::abs(x) < 1e-4);
    }
    SUBCASE("matches plaintext sum") {
        const auto cs = add(cv, cw, p);
        const auto back = decode(decrypt(cs, p, kb.secret), p);
        std::vector<double> expect(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) expect[i] = v[i] + w[i];
        CHECK(max_abs_diff(expect, back) < 2e-4);
    }
    SUBCASE("level mismatch rejected") {
        const auto dropped = level_drop(cv, cv.level - 1, p);
        CHECK_THROWS_AS(add(dropped, cw, p), LevelError);
    }
}

TEST_CASE("plaintext and scalar multiplication") {
    const auto p = test_params();
    Rng rng(5);
    const auto kb = keygen(p, {}, rng);
    const auto v = random_slots(p.slot_count(), rng);
    const auto cv = encrypt(encode(v, p, p.level_budget()), p, kb.pub, rng);

    SUBCASE("all-ones mask is identity") {
        std::vector<double> ones(p.slot_count(), 1.0);
        const auto prod = mul_plain(cv, ones, p);
        CHECK(prod.level == cv.level - 1);
        CHECK(prod.scale == doctest::Approx(cv.scale).epsilon(1e-12));
        const auto back = decode(decrypt(prod, p, kb.secret), p);
        CHECK(max_abs_diff(v, back) < 1e-3);
    }
    SUBCASE("column-times-scalar layout from the batched kernel") {
        // b1 replicated against a packed column.
        std::vector<double> col = {0.3, -0.7, 0.9, 0.1};
        col.resize(p.slot_count(), 0.0);
        std::vector<double> mask(p.slot_count(), 0.0);
        for (int i = 0; i < 4; ++i) mask[i] = 0.5;
        const auto cc = encrypt(encode(col, p, p.level_budget()), p, kb.pub, rng);
        const auto back = decode(decrypt(mul_plain(cc, mask, p), p, kb.secret), p);
        for (int i = 0; i < 4; ++i) CHECK(back[i] == doctest::Approx(col[i] * 0.5).epsilon(1e-3));
    }
    SUBCASE("scalar product matches and zero annihilates") {
        const auto half = mul_scalar(cv, 0.5, p);
        const auto back = decode(decrypt(half, p, kb.secret), p);
        std::vector<double> expect(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) expect[i] = v[i] * 0.5;
        CHECK(max_abs_diff(expect, back) < 1e-3);

        const auto zero = mul_scalar(cv, 0.0, p);
        const auto zb = decode(decrypt(zero, p, kb.secret), p);
        for (double x : zb) CHECK(std::abs(x) < 1e-4);

        const auto same = mul_scalar(cv, 1.0, p);
        const auto sb = decode(decrypt(same, p, kb.secret), p);
        CHECK(max_abs_diff(v, sb) < 1e-3);
    }
    SUBCASE("level exhaustion raises") {
        auto ct = level_drop(cv, 0, p);
        std::vector<double> ones(p.slot_count(), 1.0);
        CHECK_THROWS_AS(mul_plain(ct, ones, p), LevelError);
        CHECK_THROWS_AS(mul_scalar(ct, 2.0, p), LevelError);
    }
}

TEST_CASE("ciphertext-ciphertext multiplication") {
    const auto p = test_params();
    Rng rng(11);
    const auto kb = keygen(p, {}, rng);
    const auto v = random_slots(p.slot_count(), rng);
    const auto w = random_slots(p.slot_count(), rng);
    const auto cv = encrypt(encode(v, p, p.level_budget()), p, kb.pub, rng);
    const auto cw = encrypt(encode(w, p, p.level_budget()), p, kb.pub, rng);

    SUBCASE("times encrypted ones is identity") {
        std::vector<double> ones(p.slot_count(), 1.0);
        const auto co = encrypt(encode(ones, p, p.level_budget()), p, kb.pub, rng);
        const auto prod = mul_ct(cv, co, p, kb.pub);
        CHECK(prod.level == cv.level - 1);
        const auto back = decode(decrypt(prod, p, kb.secret), p);
        CHECK(max_abs_diff(v, back) < 1e-3);
    }
    SUBCASE("matches slotwise product") {
        const auto prod = mul_ct(cv, cw, p, kb.pub);
        const auto back = decode(decrypt(prod, p, kb.secret), p);
        for (std::size_t i = 0; i < v.size(); ++i) {
            CHECK(std::abs(back[i] - v[i] * w[i]) < 1e-3);
        }
    }
    SUBCASE("exhausted level raises") {
        const auto a0 = level_drop(cv, 0, p);
        const auto b0 = level_drop(cw, 0, p);
        CHECK_THROWS_AS(mul_ct(a0, b0, p, kb.pub), LevelError);
    }
}

TEST_CASE("rotation") {
    const auto p = test_params();
    Rng rng(13);
    const auto kb = keygen(p, default_rotation_steps(p), rng);
    std::vector<double> v(p.slot_count(), 0.0);
    v[0] = 1;
    v[1] = 2;
    v[2] = 3;
    v[3] = 4;
    const auto cv = encrypt(encode(v, p, p.level_budget()), p, kb.pub, rng);

    SUBCASE("step zero is identity") {
        const auto r = rotate(cv, 0, p, kb.pub);
        const auto back = decode(decrypt(r, p, kb.secret), p);
        CHECK(max_abs_diff(v, back) < 1e-4);
    }
    SUBCASE("left rotation by one") {
        const auto r = rotate(cv, 1, p, kb.pub);
        const auto back = decode(decrypt(r, p, kb.secret), p);
        CHECK(back[0] == doctest::Approx(2.0).epsilon(1e-4));
        CHECK(back[1] == doctest::Approx(3.0).epsilon(1e-4));
        CHECK(back[2] == doctest::Approx(4.0).epsilon(1e-4));
        CHECK(std::abs(back[3]) < 1e-3);
        CHECK(back[p.slot_count() - 1] == doctest::Approx(1.0).epsilon(1e-4));
    }
    SUBCASE("two quarter turns make a half turn, which is the identity") {
        const int quarter = static_cast<int>(p.slot_count() / 2);  // N/4
        const auto r = rotate(rotate(cv, quarter, p, kb.pub), quarter, p, kb.pub);
        const auto back = decode(decrypt(r, p, kb.secret), p);
        CHECK(max_abs_diff(v, back) < 1e-3);
    }
    SUBCASE("composition matches single rotation") {
        const auto r1 = rotate(rotate(cv, 3, p, kb.pub), 5, p, kb.pub);
        const auto r2 = rotate(cv, 8, p, kb.pub);
        const auto b1 = decode(decrypt(r1, p, kb.secret), p);
        const auto b2 = decode(decrypt(r2, p, kb.secret), p);
        CHECK(max_abs_diff(b1, b2) < 1e-3);
    }
    SUBCASE("missing key material raises") {
        Rng rng2(14);
        const auto bare = keygen(p, {4}, rng2);
        const auto cc = encrypt(encode(v, p, p.level_budget()), p, bare.pub, rng2);
        CHECK_THROWS_AS(rotate(cc, 3, p, bare.pub), KeyError);
    }
}

TEST_CASE("level ledger") {
    const auto p = test_params();
    Rng rng(17);
    const auto kb = keygen(p, {}, rng);
    const auto v = random_slots(p.slot_count(), rng, -0.5, 0.5);
    auto ct = encrypt(encode(v, p, p.level_budget()), p, kb.pub, rng);
    std::vector<double> ones(p.slot_count(), 1.0);

    // A fresh ciphertext sustains exactly level_budget multiplications.
    for (int i = 0; i < p.level_budget(); ++i) {
        const int before = ct.level;
        ct = mul_plain(ct, ones, p);
        CHECK(ct.level == before - 1);
    }
    CHECK(ct.level == 0);
    CHECK_THROWS_AS(mul_plain(ct, ones, p), LevelError);
    const auto back = decode(decrypt(ct, p, kb.secret), p);
    CHECK(max_abs_diff(v, back) < 1e-3);
}

TEST_CASE("level_drop keeps values and rejects raises") {
    const auto p = test_params();
    Rng rng(19);
    const auto kb = keygen(p, {}, rng);
    const auto v = random_slots(p.slot_count(), rng);
    const auto cv = encrypt(encode(v, p, p.level_budget()), p, kb.pub, rng);

    const auto same = level_drop(cv, cv.level, p);
    CHECK(same.level == cv.level);
    const auto lower = level_drop(cv, cv.level - 1, p);
    const auto back = decode(decrypt(lower, p, kb.secret), p);
    CHECK(max_abs_diff(v, back) < 1e-4);
    CHECK_THROWS_AS(level_drop(lower, cv.level, p), LevelError);

    // Alignment contract: dropped fresh ciphertext adds with a rescaled product.
    std::vector<double> ones(p.slot_count(), 1.0);
    const auto prod = mul_plain(cv, ones, p);
    const auto sum = add(level_drop(cv, prod.level, p), prod, p);
    const auto sb = decode(decrypt(sum, p, kb.secret), p);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(sb[i] - 2 * v[i]) < 2e-3);
}

TEST_CASE("renormalize aligns drifted scales for subtraction") {
    const auto p = test_params();
    Rng rng(23);
    const auto kb = keygen(p, {}, rng);
    const auto v = random_slots(p.slot_count(), rng);
    const auto w = random_slots(p.slot_count(), rng);
    const auto cv = encrypt(encode(v, p, p.level_budget()), p, kb.pub, rng);
    const auto cw = encrypt(encode(w, p, p.level_budget()), p, kb.pub, rng);
    const auto prod = mul_ct(cv, cw, p, kb.pub);  // scale drifts off 2^30

    const auto aligned = renormalize(level_drop(cv, prod.level + 1, p), prod.scale, p);
    const auto diff = sub(aligned, prod, p);
    const auto back = decode(decrypt(diff, p, kb.secret), p);
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(std::abs(back[i] - (v[i] - v[i] * w[i])) < 2e-3);
    }
}

TEST_CASE("rotation group property") {
    const auto p = test_params();
    Rng rng(29);
    const auto kb = keygen(p, default_rotation_steps(p), rng);
    const auto v = random_slots(p.slot_count(), rng);
    const auto cv = encrypt(encode(v, p, p.level_budget()), p, kb.pub, rng);
    const int slots = static_cast<int>(p.slot_count());
    for (const auto [i, j] : {std::pair{1, 2}, {7, 9}, {slots / 2, slots / 2 + 3}}) {
        const auto a = rotate(rotate(cv, i, p, kb.pub), j, p, kb.pub);
        const auto b = rotate(cv, (i + j) % slots, p, kb.pub);
        const auto ba = decode(decrypt(a, p, kb.secret), p);
        const auto bb = decode(decrypt(b, p, kb.secret), p);
        CHECK(max_abs_diff(ba, bb) < 2e-3);
    }
}

TEST_CASE("ciphertext serialization round trips byte exactly") {
    const auto p = test_params();
    Rng rng(31);
    const auto kb = keygen(p, {}, rng);
    const auto v = random_slots(p.slot_count(), rng);
    const auto cv = encrypt(encode(v, p, p.level_budget()), p, kb.pub, rng);

    const auto bytes = serialize_ciphertext(cv, p);
    CHECK(bytes.size() == ciphertext_byte_size(p, cv.level));
    CHECK(bytes[0] == 'C');
    CHECK(bytes[1] == 'K');
    CHECK(bytes[2] == 'K');
    CHECK(bytes[3] == '1');
    const auto parsed = parse_ciphertext(bytes, p);
    const auto again = serialize_ciphertext(parsed, p);
    CHECK(bytes == again);
    const auto back = decode(decrypt(parsed, p, kb.secret), p);
    CHECK(max_abs_diff(v, back) < 1e-4);

    SUBCASE("corrupted magic rejected") {
        auto bad = bytes;
        bad[0] = 'X';
        CHECK_THROWS_AS(parse_ciphertext(bad, p), ParseError);
    }
    SUBCASE("truncated body rejected") {
        auto bad = bytes;
        bad.pop_back();
        CHECK_THROWS_AS(parse_ciphertext(bad, p), ParseError);
    }
}
