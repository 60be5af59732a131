#ifndef HESPLIT_CONFIG_HPP
#define HESPLIT_CONFIG_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "hesplit/backend.hpp"
#include "hesplit/data.hpp"
#include "hesplit/nn.hpp"

namespace hesplit {

// Full run configuration. One JSON document with sections
// {model, crypto, protocol, data, estimator}; CLI flags override keys before
// the digest is taken, so both parties hash the effective configuration.
struct SplitModelConfig {
    // model
    std::vector<int> layer_sizes;     // l_1 .. l_{n+k}
    int split_index = 1;              // n: weight matrices executed on the server
    std::vector<int> activation_degrees;  // per server layer with encrypted activation
    double activation_lo = -15, activation_hi = 15;
    double learning_rate = 0.5;
    std::string loss = "mse";

    // crypto
    std::string param_set = "set2";   // "set1" | "set2" | "custom"
    int ring_size_log = 13;
    int log_qp = 218;
    int scale_log = 30;
    double noise_stddev = 3.2;

    // protocol
    int epochs = 10;
    int batch_size = 60;
    bool encrypt_data = false;
    std::string backend = "ckks";     // "ckks" | "noise-sim"
    double sim_noise_stddev = -1;     // <0 = model default
    int sim_precision_bits = kSimDefaultPrecisionBits;
    int refresh_every_updates = 0;    // 0 = derive (L-1) from the parameter set
    int refresh_cap_per_epoch = 100000;
    uint64_t seed = 1;
    bool literal_client_gradient = false;  // Algorithm-2-literal reading (n=1, plaintext X)

    // data
    std::string data_kind = "synth";  // "synth" | "csv" | "idx"
    std::string data_path;            // csv path or idx images path
    std::string labels_path;          // idx labels path
    int label_column = -1;
    std::vector<int> skip_columns;
    bool csv_header = false;
    int synth_samples = 200;
    int synth_features = 16;
    int synth_classes = 2;
    double train_fraction = 0.8;
    int subsample = 0;  // 0 = all training rows

    // estimator
    double desired_time_s = 60.0;
    double bandwidth_bytes_per_s = 1e6;
    std::vector<int> candidate_splits;  // empty = 1..max
    double comm_fraction = 0.1;
    double packing_threshold = 2.7;

    int total_layers() const { return static_cast<int>(layer_sizes.size()); }
    // Sizes l_1..l_{n+1}: the server's weight matrices connect consecutive
    // pairs of these.
    std::vector<int> server_sizes() const;
    // Sizes l_{n+1}..l_{n+k}: the client's plaintext segment.
    std::vector<int> client_sizes() const;
    int boundary_size() const { return layer_sizes[split_index]; }

    ckks::CryptoParams crypto_params() const;
    NoiseModel noise_model(const ckks::CryptoParams& params) const;
    Loss loss_kind() const;
    void validate() const;
};

SplitModelConfig load_config(const std::string& path);
SplitModelConfig parse_config(const std::string& json_text);
std::string canonical_json(const SplitModelConfig& c);
std::array<uint8_t, 32> config_digest(const SplitModelConfig& c);

Dataset load_dataset(const SplitModelConfig& c);

}  // namespace hesplit

#endif
