#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hesplit/nn.hpp"
#include "hesplit/util/errors.hpp"
#include "hesplit/util/rng.hpp"

using namespace hesplit;

namespace {

ckks::CryptoParams test_params() { return ckks::CryptoParams::make(11, 240, 30); }  // L=4

Eigen::MatrixXd random_matrix(int r, int c, Rng& rng, double lo = -1, double hi = 1) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
    return m;
}

}  // namespace

TEST_CASE("chebyshev sigmoid fit") {
    SUBCASE("degree 7 on [-15,15]") {
        const auto p = chebyshev_fit_sigmoid(7, -15, 15);
        CHECK(p.degree() == 7);
        CHECK(p.levels_consumed == 3);  // log2(8)
        CHECK(std::abs(p(0.0) - 0.5) < 0.02);
        // Dense-grid oracle: the stored bound is real and honored.
        double worst = 0;
        for (int g = 0; g < 100000; ++g) {
            const double x = -15 + 30.0 * g / 99999.0;
            worst = std::max(worst, std::abs(p(x) - sigmoid(x)));
        }
        CHECK(worst <= p.max_error + 1e-12);
        CHECK(p.max_error < 0.15);  // true d=7 quality on this wide interval
    }
    SUBCASE("degree 1 on [-1,1] is near-linear through one half") {
        const auto p = chebyshev_fit_sigmoid(1, -1, 1);
        CHECK(std::abs(p(0.0) - 0.5) < 1e-9);  // odd symmetry of sigmoid - 1/2
        CHECK(p.levels_consumed == 1);
    }
    SUBCASE("degenerate interval rejected") {
        CHECK_THROWS_AS(chebyshev_fit_sigmoid(3, 2, 2), ParamError);
    }
    SUBCASE("derivative differentiates the polynomial") {
        const auto p = chebyshev_fit_sigmoid(7, -15, 15);
        const auto d = p.derivative();
        const double h = 1e-6;
        for (double x : {-3.0, 0.0, 1.7}) {
            const double fd = (p(x + h) - p(x - h)) / (2 * h);
            CHECK(d(x) == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("encrypted polynomial evaluation") {
    const auto params = test_params();
    const auto sim = Backend::noise_sim(params, NoiseModel::exact(), 3);
    const Decryptor sim_dec(sim);

    SUBCASE("constant polynomial fills all slots") {
        PolyApprox c;
        c.coefficients = {0.75};
        c.lo = -1;
        c.hi = 1;
        c.levels_consumed = 1;
        const auto ct = sim.encrypt(Eigen::VectorXd::LinSpaced(8, -1, 1));
        const auto out = sim_dec.decrypt(eval_poly_encrypted(ct, c, sim));
        for (int i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(0.75));
    }
    SUBCASE("degree-7 sigmoid approximation matches the plaintext polynomial") {
        const auto p = chebyshev_fit_sigmoid(7, -15, 15);
        Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(64, -5, 5);
        const auto ct = sim.encrypt(xs);
        const auto enc = eval_poly_encrypted(ct, p, sim);
        CHECK(enc.level() == ct.level() - 3);  // consumes exactly 3 levels
        const auto out = sim_dec.decrypt(enc);
        for (int i = 0; i < xs.size(); ++i) {
            CHECK(std::abs(out[i] - p(xs[i])) < 1e-9);
        }
    }
    SUBCASE("the same under the real scheme within 1e-2") {
        ckks::KeyBundle kb;
        Rng rng(5);
        kb = ckks::keygen(params, {}, rng);
        const auto real = Backend::ckks(params, kb.pub, 7);
        const Decryptor dec(real, kb.secret);
        const auto p = chebyshev_fit_sigmoid(7, -15, 15);
        Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(64, -5, 5);
        const auto enc = eval_poly_encrypted(real.encrypt(xs), p, real);
        CHECK(enc.level() == real.level_budget() - 3);
        // Output lands on its natural scale, which stays within wire-format
        // rounding distance of an exact power of two.
        const double lg = std::log2(enc.scale());
        CHECK(std::abs(lg - std::round(lg)) < 1e-3);
        const auto out = dec.decrypt(enc);
        for (int i = 0; i < xs.size(); ++i) {
            CHECK(std::abs(out[i] - p(xs[i])) < 1e-2);
        }
    }
    SUBCASE("every degree from 1 to 9 consumes its exact budget") {
        Rng rng(11);
        for (int d = 1; d <= 9; ++d) {
            PolyApprox p;
            p.lo = -2;
            p.hi = 2;
            for (int j = 0; j <= d; ++j) p.coefficients.push_back(rng.uniform(-1, 1));
            p.levels_consumed = std::max(1, static_cast<int>(std::ceil(std::log2(d + 1.0))));
            Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(16, -1.5, 1.5);
            const auto ct = sim.encrypt(xs);
            const auto enc = eval_poly_encrypted(ct, p, sim);
            CHECK(enc.level() == ct.level() - p.levels_consumed);
            const auto out = sim_dec.decrypt(enc);
            for (int i = 0; i < xs.size(); ++i) CHECK(std::abs(out[i] - p(xs[i])) < 1e-9);
        }
    }
    SUBCASE("insufficient level budget raises") {
        const auto p = chebyshev_fit_sigmoid(7, -15, 15);  // needs 3
        auto ct = sim.encrypt(Eigen::VectorXd::Ones(4));
        ct = sim.level_drop(ct, 2);
        CHECK_THROWS_AS(eval_poly_encrypted(ct, p, sim), LevelError);
    }
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(21);
    for (const auto act : {Activation::sigmoid, Activation::approx_sigmoid}) {
        std::vector<LayerSpec> layers = {make_layer(4, 3, act, 3, -6, 6),
                                         make_layer(3, 2, Activation::sigmoid)};
        auto model = init_model(layers, 0.1, Loss::mse, 77);
        const auto X = random_matrix(5, 4, rng);
        Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(5, 2);
        for (int i = 0; i < 5; ++i) Y(i, static_cast<int>(rng.uniform_below(2))) = 1.0;

        const auto trace = forward(model, X);
        const auto grads = backward(model, trace, Y);

        const double h = 1e-5;
        int checked = 0;
        for (int l = 0; l < 2 && checked < 10; ++l) {
            for (int i = 0; i < model.weights[l].rows() && checked < 10; ++i) {
                for (int j = 0; j < model.weights[l].cols() && checked < 10; ++j) {
                    auto perturbed = model;
                    perturbed.weights[l](i, j) += h;
                    const double up =
                        compute_loss(perturbed, forward(perturbed, X).post.back(), Y);
                    perturbed.weights[l](i, j) -= 2 * h;
                    const double dn =
                        compute_loss(perturbed, forward(perturbed, X).post.back(), Y);
                    const double fd = (up - dn) / (2 * h);
                    const double an = grads.weights[l](i, j);
                    CHECK(std::abs(fd - an) / std::max(1e-8, std::abs(fd)) < 1e-4);
                    ++checked;
                }
            }
        }
    }
}

TEST_CASE("one-step closed form on a linear 1x1 model") {
    std::vector<LayerSpec> layers = {make_layer(1, 1, Activation::identity)};
    auto model = init_model(layers, 0.25, Loss::mse, 3);
    const double w0 = model.weights[0](0, 0);
    Eigen::MatrixXd X(1, 1), Y(1, 1);
    X << 0.8;
    Y << -0.4;
    const auto trace = forward(model, X);
    const auto grads = backward(model, trace, Y);
    sgd_update(model, grads);
    const double expect = w0 - 0.25 * 2.0 * (w0 * 0.8 - (-0.4)) * 0.8;
    CHECK(model.weights[0](0, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("zero learning rate leaves the model unchanged") {
    auto model = init_model({make_layer(3, 2, Activation::sigmoid)}, 0.0, Loss::mse, 4);
    const auto before = model.weights[0];
    Rng rng(31);
    const auto X = random_matrix(4, 3, rng);
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(4, 2);
    Y.col(0).setOnes();
    const auto trace = forward(model, X);
    sgd_update(model, backward(model, trace, Y));
    CHECK(model.weights[0] == before);
}

TEST_CASE("loss decreases on linearly separable data") {
    Rng rng(41);
    const int n = 80;
    Eigen::MatrixXd X(n, 2);
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, 2);
    for (int i = 0; i < n; ++i) {
        const int cls = i % 2;
        X(i, 0) = rng.uniform(0, 1) + (cls ? 2.0 : -2.0);
        X(i, 1) = rng.uniform(-1, 1);
        Y(i, cls) = 1.0;
    }
    auto model = init_model(
        {make_layer(2, 4, Activation::sigmoid), make_layer(4, 2, Activation::sigmoid)}, 0.1,
        Loss::mse, 5);
    double prev = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < 10; ++epoch) {
        const auto trace = forward(model, X);
        const double loss = compute_loss(model, trace.post.back(), Y);
        CHECK(loss < prev + 1e-12);
        prev = loss;
        sgd_update(model, backward(model, trace, Y));
    }
}

TEST_CASE("model init is deterministic per seed and layer") {
    const auto a = init_model({make_layer(3, 2, Activation::sigmoid)}, 0.1, Loss::mse, 9);
    const auto b = init_model({make_layer(3, 2, Activation::sigmoid)}, 0.1, Loss::mse, 9);
    CHECK(a.weights[0] == b.weights[0]);
    const auto c = init_model({make_layer(3, 2, Activation::sigmoid)}, 0.1, Loss::mse, 10);
    CHECK(a.weights[0] != c.weights[0]);
    const double bound = 1.0 / std::sqrt(3.0);
    CHECK(a.weights[0].cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("incompatible layer shapes rejected") {
    CHECK_THROWS_AS(init_model({make_layer(3, 2, Activation::sigmoid),
                                make_layer(3, 2, Activation::sigmoid)},
                               0.1, Loss::mse, 1),
                    DimensionError);
}

TEST_CASE("checkpoint round trip") {
    auto model = init_model(
        {make_layer(4, 3, Activation::sigmoid), make_layer(3, 2, Activation::sigmoid)}, 0.1,
        Loss::mse, 12);
    const std::string path = "/tmp/hesplit_ckpt_test.bin";
    save_checkpoint(model, path, "cfghash");
    const auto loaded = load_checkpoint(path, "cfghash");
    CHECK(loaded.weights.size() == 2);
    CHECK(loaded.weights[0] == model.weights[0]);
    CHECK(loaded.biases[1] == model.biases[1]);
    CHECK_THROWS_AS(load_checkpoint(path, "otherhash"), ParseError);
}
