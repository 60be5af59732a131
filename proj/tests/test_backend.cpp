#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hesplit/backend.hpp"
#include "hesplit/util/errors.hpp"

using namespace hesplit;

namespace {

ckks::CryptoParams test_params() { return ckks::CryptoParams::make(11, 180, 30); }

Backend make_ckks(const ckks::CryptoParams& p, ckks::KeyBundle& kb, uint64_t seed = 99) {
    Rng rng(seed);
    kb = ckks::keygen(p, ckks::default_rotation_steps(p), rng);
    return Backend::ckks(p, kb.pub, seed + 1);
}

Eigen::VectorXd random_vec(Eigen::Index n, Rng& rng) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(-1, 1);
    return v;
}

}  // namespace

TEST_CASE("zero-noise full-precision simulator reproduces plaintext arithmetic exactly") {
    const auto p = test_params();
    const auto be = Backend::noise_sim(p, NoiseModel::exact(), 1);
    const Decryptor dec(be);
    Rng rng(5);
    const auto v = random_vec(static_cast<Eigen::Index>(p.slot_count()), rng);
    const auto w = random_vec(static_cast<Eigen::Index>(p.slot_count()), rng);

    const auto cv = be.encrypt(v);
    const auto cw = be.encrypt(w);
    CHECK(dec.decrypt(cv) == v);
    CHECK(dec.decrypt(be.add(cv, cw)) == (v + w).eval());
    CHECK(dec.decrypt(be.mul_plain(cv, w)) == v.cwiseProduct(w).eval());
    CHECK(dec.decrypt(be.mul_ct(cv, cw)) == v.cwiseProduct(w).eval());
    CHECK(dec.decrypt(be.mul_scalar(cv, -1.5)) == (v * -1.5).eval());
}

TEST_CASE("simulator is bit-stable across runs with a fixed seed") {
    const auto p = test_params();
    Rng data_rng(6);
    const auto v = random_vec(static_cast<Eigen::Index>(p.slot_count()), data_rng);
    Eigen::VectorXd first;
    for (int run = 0; run < 2; ++run) {
        const auto be = Backend::noise_sim(p, NoiseModel::defaults(p), 77);
        const Decryptor dec(be);
        auto ct = be.encrypt(v);
        ct = be.mul_scalar(ct, 0.5);
        ct = be.mul_plain(ct, v);
        const auto out = dec.decrypt(ct);
        if (run == 0) {
            first = out;
        } else {
            CHECK(first == out);
        }
    }
}

TEST_CASE("level trajectories agree between backends") {
    const auto p = test_params();
    ckks::KeyBundle kb;
    const auto real = make_ckks(p, kb);
    const auto sim = Backend::noise_sim(p, NoiseModel::exact(), 2);
    Rng rng(7);
    const auto v = random_vec(static_cast<Eigen::Index>(p.slot_count()), rng);

    auto a = real.encrypt(v);
    auto b = sim.encrypt(v);
    CHECK(a.level() == b.level());
    for (int i = 0; i < p.level_budget(); ++i) {
        a = real.mul_scalar(a, 0.9);
        b = sim.mul_scalar(b, 0.9);
        CHECK(a.level() == b.level());
    }
    CHECK_THROWS_AS(real.mul_scalar(a, 0.9), LevelError);
    CHECK_THROWS_AS(sim.mul_scalar(b, 0.9), LevelError);
}

TEST_CASE("same workload agrees across backends within 1e-2") {
    const auto p = test_params();
    ckks::KeyBundle kb;
    const auto real = make_ckks(p, kb);
    const Decryptor real_dec(real, kb.secret);
    const auto sim = Backend::noise_sim(p, NoiseModel::defaults(p), 3);
    const Decryptor sim_dec(sim);
    Rng rng(8);
    const auto v = random_vec(static_cast<Eigen::Index>(p.slot_count()), rng);
    const auto m = random_vec(static_cast<Eigen::Index>(p.slot_count()), rng);

    auto run = [&](const Backend& be) {
        auto ct = be.encrypt(v);
        ct = be.mul_plain(ct, m);
        ct = be.add(ct, be.rotate(ct, 3));
        ct = be.mul_scalar(ct, 0.25);
        return ct;
    };
    const auto rv = real_dec.decrypt(run(real));
    const auto sv = sim_dec.decrypt(run(sim));
    CHECK((rv - sv).cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("values from one backend are rejected by the other") {
    const auto p = test_params();
    ckks::KeyBundle kb;
    const auto real = make_ckks(p, kb);
    const auto sim = Backend::noise_sim(p, NoiseModel::exact(), 4);
    const auto sim_ct = sim.encrypt(Eigen::VectorXd::Ones(8));
    CHECK_THROWS_AS(real.mul_scalar(sim_ct, 2.0), BackendError);
    const auto real_ct = real.encrypt(Eigen::VectorXd::Ones(8));
    CHECK_THROWS_AS(sim.add(sim_ct, real_ct), BackendError);
    const Decryptor sim_dec(sim);
    CHECK_THROWS_AS(sim_dec.decrypt(real_ct), BackendError);
}

TEST_CASE("simulator serialization round trips") {
    const auto p = test_params();
    const auto sim = Backend::noise_sim(p, NoiseModel::exact(), 5);
    const Decryptor dec(sim);
    Rng rng(9);
    const auto v = random_vec(static_cast<Eigen::Index>(p.slot_count()), rng);
    const auto ct = sim.encrypt(v);
    const auto bytes = sim.serialize(ct);
    const auto parsed = sim.parse(bytes);
    CHECK(parsed.level() == ct.level());
    CHECK(dec.decrypt(parsed) == v);
    CHECK(sim.serialize(parsed) == bytes);
}

TEST_CASE("quantization models fixed precision") {
    const auto p = test_params();
    NoiseModel nm;
    nm.mul_noise_stddev = 0;
    nm.precision_bits = 8;
    const auto sim = Backend::noise_sim(p, nm, 6);
    const Decryptor dec(sim);
    Eigen::VectorXd v(2);
    v << 0.12345, -0.987;
    auto ct = sim.encrypt(v);
    ct = sim.mul_scalar(ct, 1.0);
    const auto out = dec.decrypt(ct);
    CHECK(out[0] == doctest::Approx(std::round(0.12345 * 256) / 256).epsilon(1e-12));
    CHECK(std::abs(out[0] - 0.12345) > 1e-5);  // quantization visibly applied
}
