#include "hesplit/config.hpp"

#include <fstream>
#include <json.hpp>

#include "hesplit/util/digest.hpp"
#include "hesplit/util/errors.hpp"

namespace hesplit {

using nlohmann::json;

std::vector<int> SplitModelConfig::server_sizes() const {
    return {layer_sizes.begin(), layer_sizes.begin() + split_index + 1};
}

std::vector<int> SplitModelConfig::client_sizes() const {
    return {layer_sizes.begin() + split_index, layer_sizes.end()};
}

ckks::CryptoParams SplitModelConfig::crypto_params() const {
    if (param_set == "set1") return ckks::CryptoParams::set1();
    if (param_set == "set2") return ckks::CryptoParams::set2();
    if (param_set == "custom") {
        return ckks::CryptoParams::make(ring_size_log, log_qp, scale_log, noise_stddev);
    }
    throw ParamError("unknown crypto.param_set: " + param_set);
}

NoiseModel SplitModelConfig::noise_model(const ckks::CryptoParams& params) const {
    NoiseModel m = NoiseModel::defaults(params);
    if (sim_noise_stddev >= 0) m.mul_noise_stddev = sim_noise_stddev;
    m.precision_bits = sim_precision_bits;
    return m;
}

Loss SplitModelConfig::loss_kind() const {
    if (loss == "mse") return Loss::mse;
    if (loss == "cross_entropy" || loss == "cross-entropy") return Loss::cross_entropy;
    throw ParamError("unknown model.loss: " + loss);
}

void SplitModelConfig::validate() const {
    if (layer_sizes.size() < 2) throw ParamError("model.layer_sizes needs at least two entries");
    for (int s : layer_sizes) {
        if (s < 1) throw ParamError("model.layer_sizes entries must be >= 1");
    }
    // 1 <= n < n+k: at least the last layer stays on the client.
    if (split_index < 1 || split_index >= total_layers() - 1) {
        throw ParamError("model.split_index must be in [1, layers-2]");
    }
    if (batch_size < 1) throw ParamError("protocol.batch_size must be >= 1");
    if (epochs < 0) throw ParamError("protocol.epochs must be >= 0");
    backend_kind_from_string(backend);
    (void)loss_kind();
}

namespace {

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json to_json(const SplitModelConfig& c) {
    json j;
    j["model"] = {{"layer_sizes", c.layer_sizes},
                  {"split_index", c.split_index},
                  {"activation_degrees", c.activation_degrees},
                  {"activation_lo", c.activation_lo},
                  {"activation_hi", c.activation_hi},
                  {"learning_rate", c.learning_rate},
                  {"loss", c.loss}};
    j["crypto"] = {{"param_set", c.param_set},
                   {"ring_size_log", c.ring_size_log},
                   {"log_qp", c.log_qp},
                   {"scale_log", c.scale_log},
                   {"noise_stddev", c.noise_stddev}};
    j["protocol"] = {{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"encrypt_data", c.encrypt_data},
                     {"backend", c.backend},
                     {"sim_noise_stddev", c.sim_noise_stddev},
                     {"sim_precision_bits", c.sim_precision_bits},
                     {"refresh_every_updates", c.refresh_every_updates},
                     {"refresh_cap_per_epoch", c.refresh_cap_per_epoch},
                     {"seed", c.seed},
                     {"literal_client_gradient", c.literal_client_gradient}};
    j["data"] = {{"kind", c.data_kind},
                 {"path", c.data_path},
                 {"labels_path", c.labels_path},
                 {"label_column", c.label_column},
                 {"skip_columns", c.skip_columns},
                 {"csv_header", c.csv_header},
                 {"synth_samples", c.synth_samples},
                 {"synth_features", c.synth_features},
                 {"synth_classes", c.synth_classes},
                 {"train_fraction", c.train_fraction},
                 {"subsample", c.subsample}};
    j["estimator"] = {{"desired_time_s", c.desired_time_s},
                      {"bandwidth_bytes_per_s", c.bandwidth_bytes_per_s},
                      {"candidate_splits", c.candidate_splits},
                      {"comm_fraction", c.comm_fraction},
                      {"packing_threshold", c.packing_threshold}};
    return j;
}

}  // namespace

SplitModelConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    SplitModelConfig c;
    if (j.contains("model")) {
        const auto& m = j["model"];
        get_if(m, "layer_sizes", c.layer_sizes);
        get_if(m, "split_index", c.split_index);
        get_if(m, "activation_degrees", c.activation_degrees);
        get_if(m, "activation_lo", c.activation_lo);
        get_if(m, "activation_hi", c.activation_hi);
        get_if(m, "learning_rate", c.learning_rate);
        get_if(m, "loss", c.loss);
    }
    if (j.contains("crypto")) {
        const auto& m = j["crypto"];
        get_if(m, "param_set", c.param_set);
        get_if(m, "ring_size_log", c.ring_size_log);
        get_if(m, "log_qp", c.log_qp);
        get_if(m, "scale_log", c.scale_log);
        get_if(m, "noise_stddev", c.noise_stddev);
    }
    if (j.contains("protocol")) {
        const auto& m = j["protocol"];
        get_if(m, "epochs", c.epochs);
        get_if(m, "batch_size", c.batch_size);
        get_if(m, "encrypt_data", c.encrypt_data);
        get_if(m, "backend", c.backend);
        get_if(m, "sim_noise_stddev", c.sim_noise_stddev);
        get_if(m, "sim_precision_bits", c.sim_precision_bits);
        get_if(m, "refresh_every_updates", c.refresh_every_updates);
        get_if(m, "refresh_cap_per_epoch", c.refresh_cap_per_epoch);
        get_if(m, "seed", c.seed);
        get_if(m, "literal_client_gradient", c.literal_client_gradient);
    }
    if (j.contains("data")) {
        const auto& m = j["data"];
        get_if(m, "kind", c.data_kind);
        get_if(m, "path", c.data_path);
        get_if(m, "labels_path", c.labels_path);
        get_if(m, "label_column", c.label_column);
        get_if(m, "skip_columns", c.skip_columns);
        get_if(m, "csv_header", c.csv_header);
        get_if(m, "synth_samples", c.synth_samples);
        get_if(m, "synth_features", c.synth_features);
        get_if(m, "synth_classes", c.synth_classes);
        get_if(m, "train_fraction", c.train_fraction);
        get_if(m, "subsample", c.subsample);
    }
    if (j.contains("estimator")) {
        const auto& m = j["estimator"];
        get_if(m, "desired_time_s", c.desired_time_s);
        get_if(m, "bandwidth_bytes_per_s", c.bandwidth_bytes_per_s);
        get_if(m, "candidate_splits", c.candidate_splits);
        get_if(m, "comm_fraction", c.comm_fraction);
        get_if(m, "packing_threshold", c.packing_threshold);
    }
    return c;
}

SplitModelConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string canonical_json(const SplitModelConfig& c) {
    // nlohmann::json orders object keys lexicographically, which makes the
    // compact dump canonical.
    return to_json(c).dump();
}

std::array<uint8_t, 32> config_digest(const SplitModelConfig& c) {
    return sha256(canonical_json(c));
}

Dataset load_dataset(const SplitModelConfig& c) {
    Dataset ds;
    if (c.data_kind == "synth") {
        ds = synth(c.synth_samples, c.synth_features, c.synth_classes, derive_seed(c.seed, 1000));
    } else if (c.data_kind == "csv") {
        CsvSchema schema;
        schema.label_column = c.label_column;
        schema.skip_columns = c.skip_columns;
        schema.has_header = c.csv_header;
        ds = load_csv(c.data_path, schema);
    } else if (c.data_kind == "idx") {
        ds = load_idx(c.data_path, c.labels_path);
    } else {
        throw ParamError("unknown data.kind: " + c.data_kind);
    }
    split_train_test(ds, c.train_fraction, derive_seed(c.seed, 1001));
    if (c.subsample > 0 && c.subsample < static_cast<int>(ds.train_indices.size())) {
        ds.train_indices.resize(c.subsample);
    }
    if (ds.feature_dim() != c.layer_sizes.front()) {
        throw DimensionError("dataset feature width " + std::to_string(ds.feature_dim()) +
                             " != first layer size " + std::to_string(c.layer_sizes.front()));
    }
    if (ds.classes() != c.layer_sizes.back()) {
        throw DimensionError("dataset classes != last layer size");
    }
    return ds;
}

}  // namespace hesplit
