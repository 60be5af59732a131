#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include "hesplit/protocol/session.hpp"
#include "hesplit/util/errors.hpp"

using namespace hesplit;

namespace {

SplitModelConfig synth_config() {
    SplitModelConfig c;
    c.layer_sizes = {16, 128, 32, 2};  // accuracy-model shape on synthetic data
    c.split_index = 1;
    c.learning_rate = 0.5;
    c.param_set = "custom";
    c.ring_size_log = 11;
    c.log_qp = 180;  // L = 2
    c.scale_log = 30;
    c.backend = "noise-sim";
    c.sim_noise_stddev = 0;
    c.sim_precision_bits = 64;
    c.epochs = 2;
    c.batch_size = 32;
    c.seed = 7;
    c.data_kind = "synth";
    c.synth_samples = 200;
    c.synth_features = 16;
    c.synth_classes = 2;
    c.train_fraction = 1.0;
    return c;
}

double max_weight_gap(const TrainOutcome& split, const MonolithOutcome& mono, int n) {
    double gap = 0;
    for (std::size_t l = 0; l < split.server_weights_with_bias.size(); ++l) {
        const auto& Wb = split.server_weights_with_bias[l];
        gap = std::max(gap,
                       (Wb.leftCols(Wb.cols() - 1) - mono.model.weights[l]).cwiseAbs().maxCoeff());
        gap = std::max(gap, (Wb.col(Wb.cols() - 1) - mono.model.biases[l]).cwiseAbs().maxCoeff());
    }
    for (std::size_t l = 0; l < split.client_weights.size(); ++l) {
        gap = std::max(gap,
                       (split.client_weights[l] - mono.model.weights[n + l]).cwiseAbs().maxCoeff());
        gap = std::max(gap,
                       (split.client_biases[l] - mono.model.biases[n + l]).cwiseAbs().maxCoeff());
    }
    return gap;
}

}  // namespace

TEST_CASE("split protocol matches the monolithic trainer to 1e-9 (zero-noise sim)") {
    const auto config = synth_config();
    const auto mono = run_monolith(config);
    const auto split = run_local(config);

    REQUIRE(split.epochs.size() == 2);
    REQUIRE(mono.epochs.size() == 2);
    for (int e = 0; e < 2; ++e) {
        CHECK(split.epochs[e].loss == doctest::Approx(mono.epochs[e].loss).epsilon(1e-9));
    }
    CHECK(max_weight_gap(split, mono, config.split_index) < 1e-9);
    CHECK(split.final_accuracy == doctest::Approx(mono.final_accuracy));
}

TEST_CASE("message conservation: ciphertext counts match the packing prediction") {
    auto config = synth_config();
    config.epochs = 1;
    const auto out = run_local(config);

    // Dense boundary packing: strict(128)=256 blocks, 2048 slots -> 8
    // samples per ciphertext.
    const int slots = 1 << (config.ring_size_log - 1);
    const int block = strict_next_pow2(config.layer_sizes[1]);
    const int per_ct = slots / block;
    long expected = 0;
    const int total = config.synth_samples;
    for (int start = 0; start < total; start += config.batch_size) {
        const int b = std::min(config.batch_size, total - start);
        expected += (b + per_ct - 1) / per_ct;
    }
    CHECK(out.epochs[0].fwd_ciphertexts == expected);
    CHECK(out.epochs[0].grad_ciphertexts == expected);
}

TEST_CASE("weight refresh follows the (L-1)-update schedule and nothing else") {
    auto config = synth_config();
    config.epochs = 3;
    const auto out = run_local(config);  // L = 2 -> refresh every single update
    const int batches = (config.synth_samples + config.batch_size - 1) / config.batch_size;
    // First epoch: the first batch runs on fresh weights, every later update
    // triggers one refresh of the weight group at the start of the next batch.
    long total_refreshes = 0;
    for (const auto& e : out.epochs) total_refreshes += e.refreshes;
    CHECK(total_refreshes == 3 * batches - 1);
    for (const auto& e : out.epochs) CHECK(e.matmat_rotations == 0);  // one-level split
}

TEST_CASE("zero-epoch run exchanges nothing beyond the handshake") {
    auto config = synth_config();
    config.epochs = 0;
    const auto out = run_local(config);
    CHECK(out.epochs.empty());
    CHECK(out.final_accuracy >= 0.0);  // untrained model still evaluates
}

TEST_CASE("mismatched configurations abort the handshake") {
    auto server_cfg = synth_config();
    auto client_cfg = synth_config();
    client_cfg.layer_sizes = {16, 64, 32, 2};

    auto [server_t, client_t] = make_pipe_pair();
    Dataset server_ds = load_dataset(server_cfg);
    Dataset client_ds = load_dataset(client_cfg);

    std::exception_ptr server_err;
    std::thread st([t = std::move(server_t), &server_cfg, &server_ds, &server_err] {
        try {
            ServerSession s(server_cfg, std::move(server_ds), *t);
            s.run();
        } catch (...) {
            server_err = std::current_exception();
        }
    });
    CHECK_THROWS_AS(
        [&] {
            auto t = std::move(client_t);
            ClientSession c(client_cfg, std::move(client_ds), *t);
            c.run();
        }(),
        ProtocolError);
    st.join();
    CHECK(server_err != nullptr);
}

TEST_CASE("literal client-gradient mode reproduces the default updates") {
    auto config = synth_config();
    config.epochs = 1;
    const auto base = run_local(config);
    config.literal_client_gradient = true;
    const auto literal = run_local(config);
    // Same math, different party computes the weight gradient.
    for (std::size_t l = 0; l < base.server_weights_with_bias.size(); ++l) {
        CHECK((base.server_weights_with_bias[l] - literal.server_weights_with_bias[l])
                  .cwiseAbs()
                  .maxCoeff() < 1e-9);
    }
}

TEST_CASE("encrypted-samples path trains identically under the exact simulator") {
    auto config = synth_config();
    config.epochs = 1;
    config.synth_samples = 64;
    config.batch_size = 16;
    const auto mono = run_monolith(config);
    config.encrypt_data = true;
    const auto split = run_local(config);
    CHECK(max_weight_gap(split, mono, config.split_index) < 1e-9);
}

TEST_CASE("n=2 deep split matches the monolith under the exact simulator") {
    SplitModelConfig config;
    config.layer_sizes = {6, 5, 4, 3};
    config.split_index = 2;
    config.activation_degrees = {7};
    config.learning_rate = 0.3;
    config.param_set = "custom";
    config.ring_size_log = 11;
    config.log_qp = 240;  // L = 4
    config.scale_log = 30;
    config.backend = "noise-sim";
    config.sim_noise_stddev = 0;
    config.sim_precision_bits = 64;
    config.epochs = 1;
    config.batch_size = 8;
    config.seed = 11;
    config.data_kind = "synth";
    config.synth_samples = 16;
    config.synth_features = 6;
    config.synth_classes = 3;
    config.train_fraction = 1.0;

    const auto mono = run_monolith(config);
    const auto split = run_local(config);
    CHECK(split.epochs[0].matmat_rotations > 0);
    CHECK(split.epochs[0].refreshes > 0);
    CHECK(max_weight_gap(split, mono, config.split_index) < 1e-6);
}

TEST_CASE("tcp transport matches the in-process pipe") {
    auto config = synth_config();
    config.epochs = 1;
    config.synth_samples = 48;
    config.batch_size = 16;
    const auto local = run_local(config);

    Dataset server_ds = load_dataset(config);
    Dataset client_ds = server_ds;
    TrainOutcome remote;
    std::exception_ptr server_err;
    std::thread st([&] {
        try {
            auto t = tcp_listen("127.0.0.1", 47119);
            ServerSession s(config, std::move(server_ds), *t);
            s.run();
        } catch (...) {
            server_err = std::current_exception();
        }
    });
    {
        auto t = tcp_connect("127.0.0.1", 47119);
        ClientSession c(config, std::move(client_ds), *t);
        remote = c.run();
    }
    st.join();
    REQUIRE(server_err == nullptr);
    CHECK(remote.epochs[0].loss == doctest::Approx(local.epochs[0].loss).epsilon(1e-12));
    for (std::size_t l = 0; l < local.server_weights_with_bias.size(); ++l) {
        CHECK((local.server_weights_with_bias[l] - remote.server_weights_with_bias[l])
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    }
}

TEST_CASE("ckks backend end-to-end smoke on a small split") {
    SplitModelConfig config;
    config.layer_sizes = {8, 6, 4, 2};
    config.split_index = 1;
    config.learning_rate = 0.4;
    config.param_set = "custom";
    config.ring_size_log = 11;
    config.log_qp = 180;
    config.scale_log = 30;
    config.backend = "ckks";
    config.epochs = 2;
    config.batch_size = 16;
    config.seed = 3;
    config.data_kind = "synth";
    config.synth_samples = 64;
    config.synth_features = 8;
    config.synth_classes = 2;
    config.train_fraction = 1.0;

    const auto mono = run_monolith(config);
    const auto split = run_local(config);
    // The real scheme tracks the plaintext oracle within scheme precision.
    CHECK(max_weight_gap(split, mono, config.split_index) < 1e-2);
    CHECK(split.epochs.back().loss == doctest::Approx(mono.epochs.back().loss).epsilon(1e-2));
}
