#include <chrono>
#include <thread>

#include "hesplit/protocol/session.hpp"
#include "hesplit/util/errors.hpp"

namespace hesplit {

std::vector<LayerSpec> protocol_layers(const SplitModelConfig& config) {
    std::vector<LayerSpec> layers;
    const int n = config.split_index;
    for (int l = 0; l + 1 < config.total_layers(); ++l) {
        const bool encrypted_activation = l < n - 1;  // layers 1..n-1 activate under encryption
        int degree = 7;
        if (encrypted_activation && l < static_cast<int>(config.activation_degrees.size())) {
            degree = config.activation_degrees[l];
        }
        layers.push_back(make_layer(config.layer_sizes[l], config.layer_sizes[l + 1],
                                    encrypted_activation ? Activation::approx_sigmoid
                                                         : Activation::sigmoid,
                                    degree, config.activation_lo, config.activation_hi));
    }
    return layers;
}

std::vector<std::vector<int>> batch_schedule(const std::vector<int>& train_indices,
                                             int batch_size) {
    std::vector<std::vector<int>> batches;
    for (std::size_t i = 0; i < train_indices.size(); i += batch_size) {
        const std::size_t end = std::min(train_indices.size(), i + batch_size);
        batches.emplace_back(train_indices.begin() + i, train_indices.begin() + end);
    }
    return batches;
}

MonolithOutcome run_monolith(const SplitModelConfig& config) {
    config.validate();
    Dataset ds = load_dataset(config);
    auto model = init_model(protocol_layers(config), config.learning_rate, config.loss_kind(),
                            config.seed);
    const auto batches = batch_schedule(ds.train_indices, config.batch_size);

    MonolithOutcome out;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochMetrics m;
        m.epoch = epoch;
        double loss_sum = 0;
        double acc_sum = 0;
        long samples = 0;
        for (const auto& batch : batches) {
            Dataset b = take_rows(ds, batch);
            const auto trace = forward(model, b.features);
            loss_sum += compute_loss(model, trace.post.back(), b.labels) *
                        static_cast<double>(batch.size());
            acc_sum += accuracy(trace.post.back(), b.labels) * static_cast<double>(batch.size());
            samples += static_cast<long>(batch.size());
            const auto grads = backward(model, trace, b.labels);
            sgd_update(model, grads);
        }
        m.loss = loss_sum / static_cast<double>(samples);
        m.train_accuracy = acc_sum / static_cast<double>(samples);
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.epochs.push_back(m);
    }
    // Final training-set accuracy of the trained model.
    Dataset train = take_rows(ds, ds.train_indices);
    out.final_accuracy = accuracy(forward(model, train.features).post.back(), train.labels);
    out.model = std::move(model);
    return out;
}

TrainOutcome run_local(const SplitModelConfig& config) {
    config.validate();
    auto [server_t, client_t] = make_pipe_pair();
    Dataset server_ds = load_dataset(config);
    Dataset client_ds = server_ds;  // the client owns the data; the server copy drops labels

    TrainOutcome client_out;
    std::exception_ptr server_err, client_err;
    // Each role owns its transport so an aborting side closes the pipe and
    // unblocks the peer.
    std::thread server_thread([t = std::move(server_t), &config, &server_ds, &server_err] {
        try {
            ServerSession s(config, std::move(server_ds), *t);
            s.run();
        } catch (...) {
            server_err = std::current_exception();
        }
    });
    try {
        auto t = std::move(client_t);
        ClientSession c(config, std::move(client_ds), *t);
        client_out = c.run();
    } catch (...) {
        client_err = std::current_exception();
    }
    server_thread.join();
    if (client_err) std::rethrow_exception(client_err);
    if (server_err) std::rethrow_exception(server_err);
    return client_out;
}

}  // namespace hesplit
