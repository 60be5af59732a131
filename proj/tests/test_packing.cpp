#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hesplit/packing.hpp"
#include "hesplit/util/errors.hpp"

using namespace hesplit;

namespace {

ckks::CryptoParams test_params() { return ckks::CryptoParams::make(11, 180, 30); }

Backend sim_backend(const ckks::CryptoParams& p) {
    return Backend::noise_sim(p, NoiseModel::exact(), 12);
}

Eigen::MatrixXd random_matrix(int r, int c, Rng& rng) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-1, 1);
    return m;
}

Eigen::MatrixXd decrypt_marked(const MarkedResult& res, const Decryptor& dec) {
    std::vector<Eigen::VectorXd> plain;
    plain.reserve(res.ciphertexts.size());
    for (const auto& ct : res.ciphertexts) plain.push_back(dec.decrypt(ct));
    return extract_marked(plain, res);
}

}  // namespace

TEST_CASE("strict power-of-two padding") {
    CHECK(strict_next_pow2(3) == 4);
    CHECK(strict_next_pow2(4) == 8);  // already a power of two still doubles
    CHECK(strict_next_pow2(1) == 2);
    CHECK(strict_next_pow2(0) == 1);
    CHECK(strict_next_pow2(128) == 256);
}

TEST_CASE("batch layout arithmetic") {
    SUBCASE("128x784 weights under 4096 slots") {
        const auto lay = batch_layout(128, 784, 4096);
        CHECK(lay.padded_col_len == 256);
        CHECK(lay.cols_per_ct == 16);
        CHECK(lay.ct_count == 49);
        CHECK(lay.division_step == 16);
    }
    SUBCASE("1x1 matrix") {
        const auto lay = batch_layout(1, 1, 4096);
        CHECK(lay.ct_count == 1);
        CHECK(lay.padded_col_len == 2);
    }
    SUBCASE("column wider than slots is rejected") {
        CHECK_THROWS_AS(batch_layout(8192, 4, 4096), DimensionError);
    }
}

TEST_CASE("scalar layout packs one column per ciphertext") {
    const auto lay = scalar_layout(128, 784, 4096);
    CHECK(lay.ct_count == 784);
    CHECK(lay.cols_per_ct == 1);
    const auto small = scalar_layout(4, 1, 4096);
    CHECK(small.ct_count == 1);
}

TEST_CASE("rotsum layout follows the toy example") {
    // 3x5 matrix, 8 slots: columns padded 3 -> 4, two per ciphertext, three
    // ciphertexts with the last half-empty.
    const auto lay = rotsum_layout(3, 5, 8, false);
    CHECK(lay.block_len == 4);
    CHECK(lay.cols_per_ct == 2);
    CHECK(lay.ct_count == 3);
    CHECK(lay.division_step == 2);

    Eigen::MatrixXd B(3, 5);
    B << 1, 4, 7, 10, 13,
         2, 5, 8, 11, 14,
         3, 6, 9, 12, 15;
    const auto vecs = column_slot_vectors(B, lay, 8);
    REQUIRE(vecs.size() == 3);
    Eigen::VectorXd v0(8), v1(8), v2(8);
    v0 << 1, 2, 3, 0, 4, 5, 6, 0;
    v1 << 7, 8, 9, 0, 10, 11, 12, 0;
    v2 << 13, 14, 15, 0, 0, 0, 0, 0;
    CHECK(vecs[0] == v0);
    CHECK(vecs[1] == v1);
    CHECK(vecs[2] == v2);
}

TEST_CASE("rotsum layout pads already-power-of-two columns strictly") {
    const auto lay = rotsum_layout(4, 2, 16, false);
    CHECK(lay.block_len == 8);  // 4 -> 8
    const auto lay3 = rotsum_layout(3, 2, 16, false);
    CHECK(lay3.block_len == 4);  // 3 -> 4
}

TEST_CASE("long columns split into whole-ciphertext segments") {
    const auto lay = rotsum_layout(8192, 1, 4096, false);
    CHECK(lay.segments == 2);
    CHECK(lay.ct_count == 2);
    CHECK(lay.block_len == 4096);
    CHECK(lay.padded_col_len == 8192);
}

TEST_CASE("matvec against the plaintext oracle") {
    const auto p = test_params();
    const auto be = sim_backend(p);
    const Decryptor dec(be);
    Rng rng(21);

    SUBCASE("4x4 identity times vector") {
        Eigen::MatrixXd I = Eigen::MatrixXd::Identity(4, 4);
        Eigen::VectorXd b(4);
        b << 1, 2, 3, 4;
        const auto pw = pack_matrix_batch(I, be);
        const auto out = matvec_one_level(pw, b, be);
        REQUIRE(out.size() == 1);
        const auto folded = client_fold(
            dec.decrypt(out[0]).head(pw.layout.cols_per_ct * pw.layout.padded_col_len),
            pw.layout.cols_per_ct, pw.layout.padded_col_len, 4);
        CHECK((folded - b).cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("4x4 dense matrix under both schemes") {
        const auto A = random_matrix(4, 4, rng);
        const Eigen::VectorXd b = random_matrix(4, 1, rng);
        const Eigen::VectorXd expect = A * b;
        for (const bool batch : {true, false}) {
            const auto pw = batch ? pack_matrix_batch(A, be) : pack_matrix_scalar(A, be);
            const auto out = matvec_one_level(pw, b, be);
            const auto folded = client_fold(
                dec.decrypt(out[0]).head(pw.layout.cols_per_ct * pw.layout.padded_col_len),
                pw.layout.cols_per_ct, pw.layout.padded_col_len, 4);
            CHECK((folded - expect).cwiseAbs().maxCoeff() < 1e-3);
        }
    }
    SUBCASE("random 32x64 under both schemes") {
        const auto A = random_matrix(32, 64, rng);
        const Eigen::VectorXd b = random_matrix(64, 1, rng);
        const Eigen::VectorXd expect = A * b;
        for (const bool batch : {true, false}) {
            const auto pw = batch ? pack_matrix_batch(A, be) : pack_matrix_scalar(A, be);
            const auto out = matvec_one_level(pw, b, be);
            CHECK(out[0].level() == be.level_budget() - 1);  // exactly one level
            const auto folded = client_fold(
                dec.decrypt(out[0]).head(pw.layout.cols_per_ct * pw.layout.padded_col_len),
                pw.layout.cols_per_ct, pw.layout.padded_col_len, 32);
            CHECK((folded - expect).cwiseAbs().maxCoeff() < 1e-3);
        }
    }
    SUBCASE("dimension mismatch raises") {
        const auto A = random_matrix(4, 4, rng);
        const auto pw = pack_matrix_batch(A, be);
        CHECK_THROWS_AS(matvec_one_level(pw, Eigen::VectorXd::Zero(5), be), DimensionError);
    }
}

TEST_CASE("client_fold reproduces the two-block worked example") {
    // Decrypted blocks [a11b1+a13b3, ..., a12b2+a14b4, ...]: folding the two
    // 4-blocks yields the full 4-entry matvec.
    Eigen::VectorXd blocks(8);
    blocks << 1, 2, 3, 4, 10, 20, 30, 40;
    const auto folded = client_fold(blocks, 2, 4, 4);
    Eigen::VectorXd expect(4);
    expect << 11, 22, 33, 44;
    CHECK(folded == expect);

    SUBCASE("single block is identity truncation") {
        Eigen::VectorXd one(4);
        one << 5, 6, 7, 8;
        CHECK(client_fold(one, 1, 4, 3) == one.head(3));
    }
    SUBCASE("length mismatch raises") {
        CHECK_THROWS_AS(client_fold(blocks, 3, 4, 4), DimensionError);
    }
    SUBCASE("random blocks against the oracle") {
        Rng rng(31);
        Eigen::VectorXd rb(12);
        for (int i = 0; i < 12; ++i) rb[i] = rng.uniform(-1, 1);
        const auto f = client_fold(rb, 3, 4, 4);
        for (int i = 0; i < 4; ++i) {
            CHECK(f[i] == doctest::Approx(rb[i] + rb[4 + i] + rb[8 + i]));
        }
    }
}

TEST_CASE("rotsum matmat reproduces the paper's marked layout") {
    const auto p = test_params();
    const auto be = sim_backend(p);
    const Decryptor dec(be);

    Eigen::MatrixXd A(3, 3);
    A << 1, 2, 3,
         4, 5, 6,
         7, 8, 9;
    Eigen::MatrixXd B(3, 5);
    B << 1, 0, 2, 1, 3,
         0, 1, 1, 2, 0,
         1, 1, 0, 0, 1;
    const auto pb = pack_columns_rotsum(B, be);
    const auto res = matmat_rotsum(A, pb, be);

    // Marked slots: row 0 results for columns 0 and 1 live in the first
    // result ciphertext at slots 0 and block_len.
    CHECK(res.mark_positions[0] == std::pair{0, 0});
    CHECK(res.mark_positions[1] == std::pair{0, pb.layout.block_len});
    const Eigen::VectorXd first = dec.decrypt(res.ciphertexts[0]);
    const Eigen::MatrixXd expect = A * B;
    CHECK(first[0] == doctest::Approx(expect(0, 0)).epsilon(1e-9));
    CHECK(first[pb.layout.block_len] == doctest::Approx(expect(0, 1)).epsilon(1e-9));

    const auto got = decrypt_marked(res, dec);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-9);

    // Two rotate-adds per ciphertext for block length 4.
    CHECK(res.rotations_used == 3 * pb.layout.ct_count * 2);
}

TEST_CASE("rotsum matmat oracle equivalence and level use") {
    const auto p = test_params();
    const auto be = sim_backend(p);
    const Decryptor dec(be);
    Rng rng(41);

    SUBCASE("identity A reproduces B") {
        const auto B = random_matrix(8, 8, rng);
        const auto pb = pack_columns_rotsum(B, be);
        const auto res = matmat_rotsum(Eigen::MatrixXd::Identity(8, 8), pb, be);
        const auto got = decrypt_marked(res, dec);
        CHECK((got - B).cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("random plaintext-A products up to 64x64") {
        for (int rep = 0; rep < 6; ++rep) {
            const int r = 1 + static_cast<int>(rng.uniform_below(32));
            const int m = 1 + static_cast<int>(rng.uniform_below(64));
            const int c = 1 + static_cast<int>(rng.uniform_below(64));
            const auto A = random_matrix(r, m, rng);
            const auto B = random_matrix(m, c, rng);
            const auto pb = pack_columns_rotsum(B, be);
            const auto res = matmat_rotsum(A, pb, be);
            const auto got = decrypt_marked(res, dec);
            CHECK((got - A * B).cwiseAbs().maxCoeff() < 1e-2);
            CHECK(res.ciphertexts[0].level() == be.level_budget() - 1);
        }
    }
    SUBCASE("encrypted-rows ciphertext-ciphertext product") {
        const auto A = random_matrix(8, 8, rng);
        const auto B = random_matrix(8, 8, rng);
        const auto pb = pack_columns_rotsum(B, be);
        std::vector<CipherValue> rows;
        for (int i = 0; i < 8; ++i) {
            rows.push_back(be.encrypt(replicate_row_for_rotsum(
                A.row(i).transpose(), pb.layout, static_cast<int>(be.slot_count()), 0)));
        }
        const auto res = matmat_rotsum(rows, pb, be);
        const auto got = decrypt_marked(res, dec);
        CHECK((got - A * B).cwiseAbs().maxCoeff() < 1e-2);
    }
    SUBCASE("inner dimension mismatch raises") {
        const auto B = random_matrix(8, 8, rng);
        const auto pb = pack_columns_rotsum(B, be);
        CHECK_THROWS_AS(matmat_rotsum(random_matrix(2, 7, rng), pb, be), DimensionError);
    }
    SUBCASE("segmented columns cross-segment summation") {
        const int slots = static_cast<int>(be.slot_count());
        const auto B = random_matrix(2 * slots, 2, rng);
        const auto pb = pack_columns_rotsum(B, be);
        CHECK(pb.layout.segments == 2);
        const auto A = random_matrix(2, 2 * slots, rng);
        const auto res = matmat_rotsum(A, pb, be);
        const auto got = decrypt_marked(res, dec);
        CHECK((got - A * B).cwiseAbs().maxCoeff() < 1e-2);
    }
}

TEST_CASE("garbage slots never influence marked outputs") {
    // Metamorphic: randomize the padding region of B's columns; the marked
    // results must not move.
    const auto p = test_params();
    const auto be = sim_backend(p);
    const Decryptor dec(be);
    Rng rng(53);
    const auto A = random_matrix(3, 3, rng);
    const auto B = random_matrix(3, 5, rng);
    const auto lay = rotsum_layout(3, 5, static_cast<int>(be.slot_count()), false);

    auto vecs = column_slot_vectors(B, lay, static_cast<int>(be.slot_count()));
    // Poison every slot beyond the logical data regions.
    for (auto& v : vecs) {
        for (int j = 0; j < lay.cols_per_ct; ++j) {
            v[j * lay.block_len + lay.rows] = rng.uniform(-9, 9);  // the zero pad slot
        }
    }
    PackedWeights poisoned;
    poisoned.scheme = PackingScheme::rotsum_matrix;
    poisoned.layout = lay;
    for (const auto& v : vecs) poisoned.ciphertexts.push_back(be.encrypt(v));

    const auto res = matmat_rotsum(A, poisoned, be);
    const auto got = decrypt_marked(res, dec);
    CHECK((got - A * B).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("packing chooser thresholds") {
    const auto p = ckks::CryptoParams::set2();  // 4096 slots
    CHECK(choose_packing(128, p) == PackingScheme::one_level_batch);   // ratio 32
    CHECK(choose_packing(4096, p) == PackingScheme::one_level_scalar); // ratio 1
    // Boundary: 4096/1517 = 2.70007... -> batch under strict less-than.
    CHECK(choose_packing(1517, p) == PackingScheme::one_level_batch);
    CHECK(choose_packing(1518, p) == PackingScheme::one_level_scalar); // 2.698...
    // Exactly 2.7 is not below the threshold.
    CHECK(choose_packing(1000, p, 4.096) == PackingScheme::one_level_batch);
    CHECK_THROWS_AS(choose_packing(0, p), DimensionError);
}

TEST_CASE("rotation-count formula") {
    const auto p = ckks::CryptoParams::set2();
    SUBCASE("worked 784x128 example") {
        CHECK(count_rotations_formula({784, 128}, p) == doctest::Approx(512.0));
    }
    SUBCASE("single layer has no product") {
        CHECK(count_rotations_formula({784}, p) == 0.0);
    }
    SUBCASE("ceiling variant rounds fractional ciphertext counts up") {
        // 32x32 padded: 64*64/4096 = 1 ciphertext exactly, log2(64)=6.
        CHECK(count_rotations_ceil({32, 32}, p) == doctest::Approx(6.0));
        // 8x8 padded: 16*16/4096 fractional -> ceil to 1 ciphertext.
        CHECK(count_rotations_formula({8, 8}, p) < 1.0);
        CHECK(count_rotations_ceil({8, 8}, p) == doctest::Approx(4.0));
    }
}

TEST_CASE("instrumented rotations equal the formula in the layer configuration") {
    // The backward-shaped layer product: one delta row of length l_{i+1}
    // against the weight matrix packed as length-l_{i+1} columns indexed by
    // the l_i inputs, column count padded. Exact equality for every shape
    // whose padded block product reaches one full ciphertext.
    const auto p = test_params();  // 1024 slots
    const auto be = sim_backend(p);
    Rng rng(61);
    const std::vector<std::pair<int, int>> shapes = {
        {40, 40}, {60, 33}, {100, 100}, {127, 65}, {200, 150}, {300, 40},
    };
    for (const auto& [li, lj] : shapes) {
        const auto W = random_matrix(lj, li, rng);  // out x in orientation
        const auto pb = pack_columns_rotsum(W, be, /*pad_column_count=*/true);
        const auto delta = random_matrix(1, lj, rng);
        const auto res = matmat_rotsum(delta, pb, be);
        const double predicted = count_rotations_formula({li, lj}, p);
        CHECK(res.rotations_used == doctest::Approx(predicted));
    }
}
