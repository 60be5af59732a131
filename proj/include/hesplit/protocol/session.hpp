#ifndef HESPLIT_PROTOCOL_SESSION_HPP
#define HESPLIT_PROTOCOL_SESSION_HPP

#include <memory>
#include <optional>

#include "hesplit/config.hpp"
#include "hesplit/packing.hpp"
#include "hesplit/protocol/transport.hpp"

namespace hesplit {

enum class Role { server, client };

struct EpochMetrics {
    int epoch = 0;
    double loss = 0;
    double train_accuracy = 0;
    long fwd_ciphertexts = 0;
    long grad_ciphertexts = 0;
    int refreshes = 0;
    long matmat_rotations = 0;
    long aux_rotations = 0;  // one-level update block folds
    double seconds = 0;
    uint64_t bytes_sent = 0;
    uint64_t bytes_received = 0;
};

struct TrainOutcome {
    std::vector<EpochMetrics> epochs;
    // Client side: its plaintext segment and the decrypted server weights
    // (weights | trailing bias column) recovered at shutdown.
    std::vector<Eigen::MatrixXd> client_weights;
    std::vector<Eigen::VectorXd> client_biases;
    std::vector<Eigen::MatrixXd> server_weights_with_bias;
    double final_accuracy = 0;
};

// Server role: owns the samples, never the labels or the secret key. The
// dataset's label block is discarded at construction.
class ServerSession {
public:
    ServerSession(const SplitModelConfig& config, Dataset dataset, Transport& transport);
    ~ServerSession();
    TrainOutcome run();

private:
    struct State;
    std::unique_ptr<State> st_;
};

// Client role: owns the labels, the plaintext segment and the key material.
class ClientSession {
public:
    ClientSession(const SplitModelConfig& config, Dataset dataset, Transport& transport);
    ~ClientSession();
    TrainOutcome run();

private:
    struct State;
    std::unique_ptr<State> st_;
};

// Runs both roles over an in-process pipe; returns the client outcome (the
// side that can see every number).
TrainOutcome run_local(const SplitModelConfig& config);

// Monolithic plaintext trainer with the identical batch schedule, loss,
// init seeds and activation assignment (approximated activations on the
// would-be-encrypted layers).
struct MonolithOutcome {
    std::vector<EpochMetrics> epochs;
    ModelState model;
    double final_accuracy = 0;
};
MonolithOutcome run_monolith(const SplitModelConfig& config);

// The model the protocol trains: approx-sigmoid on server layers 1..n-1
// (their activations run under encryption), plain sigmoid elsewhere.
std::vector<LayerSpec> protocol_layers(const SplitModelConfig& config);

// Batch index ranges shared by the split and monolithic paths.
std::vector<std::vector<int>> batch_schedule(const std::vector<int>& train_indices,
                                             int batch_size);

}  // namespace hesplit

#endif
