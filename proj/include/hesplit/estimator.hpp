#ifndef HESPLIT_ESTIMATOR_HPP
#define HESPLIT_ESTIMATOR_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hesplit/packing.hpp"

namespace hesplit {

// Median/MAD per-operation timings bound to one parameter set.
struct OpTiming {
    double median_s = 0;
    double mad_s = 0;
};

struct MicrobenchProfile {
    OpTiming rot, encode, mul_plain, mul_ct, add, decrypt, decode, mul_scalar;
    std::string params_hash;
    std::string machine_id;
    int reps = 0;

    // The scalar/batch speed ratio the packing heuristic talks about;
    // reported, never asserted.
    double mulct_over_mulscalar() const {
        return mul_scalar.median_s > 0 ? mul_ct.median_s / mul_scalar.median_s : 0;
    }
};

// Nanosecond clock, injectable for tests.
using Clock = std::function<uint64_t()>;
Clock steady_clock_ns();

MicrobenchProfile run_microbench(const ckks::CryptoParams& params, int reps,
                                 Clock clock = steady_clock_ns());

void save_profile(const MicrobenchProfile& p, const std::string& path);
std::optional<MicrobenchProfile> load_profile(const std::string& path,
                                              const std::string& expected_params_hash);
std::string machine_id();

struct EstimateRequest {
    std::vector<int> layer_sizes;        // full network l_1..l_{n+k}
    std::vector<int> candidate_splits;   // empty = 1..layers-2
    double desired_time_s = 60;          // T_d
    double bandwidth_bytes_per_s = 1e6;  // O_c
    long sample_count = 0;               // |X|
    int batch_size = 60;
    int activation_degree = 7;
    double comm_fraction = 0.1;          // boundary-size budget share of T_d
    double packing_threshold = 2.7;
    int passes = 2;                      // forward+backward for n>1 products
};

struct SplitEstimate {
    int split_index = 0;
    double rotations_per_epoch = 0;        // rotation formula x samples x passes
    double rotations_formula_per_sample = 0;
    double rotations_ceil_per_sample = 0;  // whole-ciphertext variant
    double compute_seconds = 0;
    double traffic_bytes = 0;              // serialized ciphertexts
    double traffic_bytes_ideal = 0;        // idealized |c| = N bytes
    double comm_seconds = 0;
    double total_seconds = 0;
    int refreshes_per_epoch = 0;
    int depth_mu = 0;                      // (log2(d+1))*n + n
    bool bootstrap_needed = false;         // depth_mu > L
    bool feasible = false;
    PackingScheme boundary_scheme = PackingScheme::one_level_batch;
};

struct EstimateReport {
    std::vector<SplitEstimate> per_split;
    std::optional<int> recommended_split;
    bool recommendation_feasible = false;
    int max_boundary_size = 0;  // largest last-server-layer size within budget
    std::string profile_hash;
    std::string params_hash;
};

// The refresh trigger rule: with degree-d activations on n encrypted layers,
// (log2(d+1))*n + n multiplications exceed the budget L.
bool refresh_trigger(int degree, int n_layers, int level_budget);

EstimateReport estimate_epoch(const EstimateRequest& req, const MicrobenchProfile& profile,
                              const ckks::CryptoParams& params);

std::string report_to_json(const EstimateReport& r);
std::string report_to_table(const EstimateReport& r);

}  // namespace hesplit

#endif
