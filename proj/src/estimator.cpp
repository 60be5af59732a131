#include "hesplit/estimator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "hesplit/ckks/serialize.hpp"
#include "hesplit/util/rng.hpp"
#include "hesplit/util/digest.hpp"
#include "hesplit/util/errors.hpp"

namespace hesplit {

using nlohmann::json;

Clock steady_clock_ns() {
    return [] {
        return static_cast<uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                         std::chrono::steady_clock::now().time_since_epoch())
                                         .count());
    };
}

std::string machine_id() {
    char host[256] = {0};
    gethostname(host, sizeof(host) - 1);
    return std::string(host) + "/" + std::to_string(std::thread::hardware_concurrency()) + "c";
}

namespace {

OpTiming summarize(std::vector<double>& samples) {
    std::sort(samples.begin(), samples.end());
    OpTiming t;
    t.median_s = samples[samples.size() / 2];
    std::vector<double> dev;
    dev.reserve(samples.size());
    for (double s : samples) dev.push_back(std::abs(s - t.median_s));
    std::sort(dev.begin(), dev.end());
    t.mad_s = dev[dev.size() / 2];
    return t;
}

template <typename F>
OpTiming time_op(F&& op, int reps, const Clock& clock) {
    for (int i = 0; i < 3; ++i) op();  // warm-up, excluded
    std::vector<double> samples;
    samples.reserve(reps);
    for (int i = 0; i < reps; ++i) {
        const uint64_t t0 = clock();
        op();
        const uint64_t t1 = clock();
        samples.push_back(static_cast<double>(t1 - t0) * 1e-9);
    }
    return summarize(samples);
}

}  // namespace

MicrobenchProfile run_microbench(const ckks::CryptoParams& params, int reps, Clock clock) {
    if (reps < 10) throw ParamError("run_microbench: reps must be >= 10");
    Rng rng(0x6d6963726fULL);
    const auto kb = ckks::keygen(params, {1}, rng);

    std::vector<double> values(params.slot_count());
    for (auto& v : values) v = rng.uniform(-1, 1);
    const auto pt = ckks::encode(values, params, params.level_budget());
    const auto ct = ckks::encrypt(pt, params, kb.pub, rng);
    const auto ct2 = ckks::encrypt(pt, params, kb.pub, rng);

    MicrobenchProfile p;
    p.reps = reps;
    p.params_hash = hex(sha256(params.fingerprint()));
    p.machine_id = machine_id();
    p.encode = time_op([&] { (void)ckks::encode(values, params, params.level_budget()); }, reps,
                       clock);
    p.decode = time_op([&] { (void)ckks::decode(pt, params); }, reps, clock);
    p.decrypt = time_op([&] { (void)ckks::decrypt(ct, params, kb.secret); }, reps, clock);
    p.add = time_op([&] { (void)ckks::add(ct, ct2, params); }, reps, clock);
    p.mul_plain = time_op([&] { (void)ckks::mul_plain(ct, values, params); }, reps, clock);
    p.mul_scalar = time_op([&] { (void)ckks::mul_scalar(ct, 0.5, params); }, reps, clock);
    p.mul_ct = time_op([&] { (void)ckks::mul_ct(ct, ct2, params, kb.pub); }, reps, clock);
    p.rot = time_op([&] { (void)ckks::rotate(ct, 1, params, kb.pub); }, reps, clock);
    return p;
}

namespace {

json timing_to_json(const OpTiming& t) { return {{"median_s", t.median_s}, {"mad_s", t.mad_s}}; }

OpTiming timing_from_json(const json& j) {
    OpTiming t;
    t.median_s = j.at("median_s").get<double>();
    t.mad_s = j.at("mad_s").get<double>();
    return t;
}

}  // namespace

void save_profile(const MicrobenchProfile& p, const std::string& path) {
    json j;
    j["params_hash"] = p.params_hash;
    j["machine_id"] = p.machine_id;
    j["reps"] = p.reps;
    j["rot"] = timing_to_json(p.rot);
    j["encode"] = timing_to_json(p.encode);
    j["mul_plain"] = timing_to_json(p.mul_plain);
    j["mul_ct"] = timing_to_json(p.mul_ct);
    j["add"] = timing_to_json(p.add);
    j["decrypt"] = timing_to_json(p.decrypt);
    j["decode"] = timing_to_json(p.decode);
    j["mul_scalar"] = timing_to_json(p.mul_scalar);
    j["mulct_over_mulscalar"] = p.mulct_over_mulscalar();
    std::ofstream f(path);
    if (!f) throw Error("save_profile: cannot open " + path);
    f << j.dump(2) << "\n";
}

std::optional<MicrobenchProfile> load_profile(const std::string& path,
                                              const std::string& expected_params_hash) {
    std::ifstream f(path);
    if (!f) return std::nullopt;
    json j;
    try {
        f >> j;
        MicrobenchProfile p;
        p.params_hash = j.at("params_hash").get<std::string>();
        if (!expected_params_hash.empty() && p.params_hash != expected_params_hash) {
            return std::nullopt;
        }
        p.machine_id = j.at("machine_id").get<std::string>();
        p.reps = j.at("reps").get<int>();
        p.rot = timing_from_json(j.at("rot"));
        p.encode = timing_from_json(j.at("encode"));
        p.mul_plain = timing_from_json(j.at("mul_plain"));
        p.mul_ct = timing_from_json(j.at("mul_ct"));
        p.add = timing_from_json(j.at("add"));
        p.decrypt = timing_from_json(j.at("decrypt"));
        p.decode = timing_from_json(j.at("decode"));
        p.mul_scalar = timing_from_json(j.at("mul_scalar"));
        return p;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

bool refresh_trigger(int degree, int n_layers, int level_budget) {
    const int act_levels = std::max(1, static_cast<int>(std::ceil(std::log2(degree + 1.0))));
    return act_levels * n_layers + n_layers > level_budget;
}

namespace {

int ceil_div_l(long a, long b) { return static_cast<int>((a + b - 1) / b); }

SplitEstimate estimate_split(const EstimateRequest& req, const MicrobenchProfile& prof,
                             const ckks::CryptoParams& params, int n) {
    const auto& sizes = req.layer_sizes;
    const long slots = static_cast<long>(params.slot_count());
    const int L = params.level_budget();
    SplitEstimate e;
    e.split_index = n;

    // Rotation accounting: the formula covers the matrix-matrix products,
    // i.e. server weights 1..n-1; the n-th product is the one-level boundary
    // operation. One pass per sample forward, doubled for the backward pass
    // when matmat layers exist.
    const std::vector<int> matmat_sizes(sizes.begin(), sizes.begin() + n);
    e.rotations_formula_per_sample = count_rotations_formula(matmat_sizes, params);
    e.rotations_ceil_per_sample = count_rotations_ceil(matmat_sizes, params);
    const int passes = n > 1 ? req.passes : 1;
    e.rotations_per_epoch = e.rotations_formula_per_sample *
                            static_cast<double>(req.sample_count) * passes;

    const int boundary = sizes[n];
    e.boundary_scheme = choose_packing(boundary, params, req.packing_threshold);
    const int padded_boundary = strict_next_pow2(boundary);
    const long group = std::max<long>(1, slots / padded_boundary);  // samples per ciphertext

    const long batches = ceil_div_l(req.sample_count, req.batch_size);
    const long full_batch_groups = ceil_div_l(req.batch_size, group);
    const long last_batch = req.sample_count - (batches - 1) * req.batch_size;
    const long groups_per_epoch = (batches - 1) * full_batch_groups +
                                  ceil_div_l(std::max<long>(1, last_batch), group);

    // One-level boundary work: per group, one mask product per weight column
    // (plus bias), forward and update, plus the update's block-fold
    // rotations under the batch scheme.
    const long cols = sizes[n - 1] + 1;
    const double fwd_ops = static_cast<double>(cols * groups_per_epoch);
    const double upd_ops = static_cast<double>(cols * groups_per_epoch);
    const double fold_rot = e.boundary_scheme == PackingScheme::one_level_batch
                                ? static_cast<double>(cols * groups_per_epoch) *
                                      std::log2(static_cast<double>(group))
                                : 0.0;

    const double mul_time = e.boundary_scheme == PackingScheme::one_level_scalar
                                ? prof.mul_scalar.median_s
                                : prof.mul_plain.median_s;
    e.compute_seconds = e.rotations_per_epoch * prof.rot.median_s +
                        (fwd_ops + upd_ops) * mul_time +
                        (fwd_ops + upd_ops) * prof.add.median_s + fold_rot * prof.rot.median_s;
    // Client-side edge work per exchanged ciphertext.
    e.compute_seconds += 2.0 * static_cast<double>(groups_per_epoch) *
                         (prof.decrypt.median_s + prof.decode.median_s + prof.encode.median_s);
    // Matmat layers add their products and activation evaluations.
    if (n > 1) {
        double matmat_muls = 0;
        for (int i = 0; i + 1 < n; ++i) {
            matmat_muls += std::ceil(static_cast<double>(strict_next_pow2(sizes[i]) *
                                                         strict_next_pow2(sizes[i + 1])) /
                                     static_cast<double>(slots));
        }
        const int act_levels = std::max(
            1, static_cast<int>(std::ceil(std::log2(req.activation_degree + 1.0))));
        e.compute_seconds += static_cast<double>(req.sample_count) * passes *
                             (matmat_muls * prof.mul_ct.median_s +
                              (n - 1) * (req.activation_degree + act_levels) *
                                  prof.mul_ct.median_s);
    }

    // Traffic: boundary outputs and gradients per epoch, dense-packed.
    const double ct_bytes =
        static_cast<double>(ckks::ciphertext_byte_size(params, params.level_budget()));
    const double ideal_ct_bytes = static_cast<double>(params.ring_size());
    e.traffic_bytes = 2.0 * static_cast<double>(groups_per_epoch) * ct_bytes;
    e.traffic_bytes_ideal = static_cast<double>(req.sample_count) *
                            static_cast<double>(boundary) / static_cast<double>(slots) *
                            ideal_ct_bytes;

    // Refreshes: the weight-ledger policy refreshes every L-1 updates; deep
    // splits additionally refresh mid-batch when the trigger rule fires.
    e.depth_mu = std::max(1, static_cast<int>(std::ceil(
                                 std::log2(req.activation_degree + 1.0)))) * n + n;
    e.bootstrap_needed = refresh_trigger(req.activation_degree, n, L);
    const long updates = batches;
    e.refreshes_per_epoch = static_cast<int>(updates / std::max(1, L - 1));
    if (n > 1 && e.bootstrap_needed) {
        const int round_trips = static_cast<int>(std::ceil(static_cast<double>(e.depth_mu) / L)) - 1;
        e.refreshes_per_epoch += static_cast<int>(batches) * (n - 1) * std::max(1, round_trips);
        e.traffic_bytes += 2.0 * static_cast<double>(batches * (n - 1) *
                                                     std::max(1, round_trips)) *
                           full_batch_groups * ct_bytes;
    }

    e.comm_seconds = e.traffic_bytes / req.bandwidth_bytes_per_s;
    e.total_seconds = e.compute_seconds + e.comm_seconds;
    e.feasible = e.total_seconds <= req.desired_time_s;
    return e;
}

}  // namespace

EstimateReport estimate_epoch(const EstimateRequest& req, const MicrobenchProfile& profile,
                              const ckks::CryptoParams& params) {
    if (req.layer_sizes.size() < 2) throw ParamError("estimate: need at least two layers");
    if (!(req.desired_time_s > 0)) throw ParamError("estimate: desired time must be positive");
    if (!(req.bandwidth_bytes_per_s > 0)) throw ParamError("estimate: bandwidth must be positive");

    std::vector<int> candidates = req.candidate_splits;
    if (candidates.empty()) {
        for (int n = 1; n <= static_cast<int>(req.layer_sizes.size()) - 2; ++n) {
            candidates.push_back(n);
        }
    }
    EstimateReport rep;
    rep.profile_hash = profile.params_hash;
    rep.params_hash = hex(sha256(params.fingerprint()));
    for (int n : candidates) {
        if (n < 1 || n > static_cast<int>(req.layer_sizes.size()) - 2) {
            throw ParamError("estimate: candidate split out of range");
        }
        rep.per_split.push_back(estimate_split(req, profile, params, n));
    }

    // Recommendation: deepest feasible split; equal-cost ties resolve to the
    // smaller split since the extra depth buys nothing.
    const SplitEstimate* best = nullptr;
    for (const auto& e : rep.per_split) {
        if (!e.feasible) continue;
        if (!best || e.split_index > best->split_index) best = &e;
    }
    if (best) {
        const SplitEstimate* chosen = best;
        for (const auto& e : rep.per_split) {
            if (e.feasible && e.split_index < chosen->split_index &&
                e.total_seconds == chosen->total_seconds) {
                chosen = &e;
            }
        }
        rep.recommended_split = chosen->split_index;
        rep.recommendation_feasible = true;
    } else {
        // Nothing meets T_d: fall back to the shallowest one-level split.
        rep.recommended_split = 1;
        rep.recommendation_feasible = false;
    }

    // Largest boundary size whose dense-packed exchange stays within the
    // configured fraction of T_d.
    const double ct_bytes =
        static_cast<double>(ckks::ciphertext_byte_size(params, params.level_budget()));
    const double budget_cts =
        req.comm_fraction * req.desired_time_s * req.bandwidth_bytes_per_s / ct_bytes;
    const double padded_bound = budget_cts * static_cast<double>(params.slot_count()) /
                                std::max(1.0, static_cast<double>(req.sample_count));
    int pow2 = 1;
    while (2 * pow2 <= static_cast<long>(padded_bound) &&
           pow2 < static_cast<int>(params.slot_count())) {
        pow2 <<= 1;
    }
    rep.max_boundary_size = padded_bound >= 2 ? pow2 - 1 : 0;
    return rep;
}

std::string report_to_json(const EstimateReport& r) {
    json j;
    j["profile_hash"] = r.profile_hash;
    j["params_hash"] = r.params_hash;
    j["recommended_split"] = r.recommended_split ? json(*r.recommended_split) : json();
    j["recommendation_feasible"] = r.recommendation_feasible;
    j["max_boundary_size"] = r.max_boundary_size;
    j["per_split"] = json::array();
    for (const auto& e : r.per_split) {
        j["per_split"].push_back(
            {{"split_index", e.split_index},
             {"rotations_per_epoch", e.rotations_per_epoch},
             {"rotations_formula_per_sample", e.rotations_formula_per_sample},
             {"rotations_ceil_per_sample", e.rotations_ceil_per_sample},
             {"compute_seconds", e.compute_seconds},
             {"traffic_bytes", e.traffic_bytes},
             {"traffic_bytes_ideal", e.traffic_bytes_ideal},
             {"comm_seconds", e.comm_seconds},
             {"total_seconds", e.total_seconds},
             {"refreshes_per_epoch", e.refreshes_per_epoch},
             {"depth_mu", e.depth_mu},
             {"bootstrap_needed", e.bootstrap_needed},
             {"feasible", e.feasible},
             {"boundary_scheme",
              e.boundary_scheme == PackingScheme::one_level_scalar ? "scalar" : "batch"}});
    }
    return j.dump(2);
}

std::string report_to_table(const EstimateReport& r) {
    std::ostringstream os;
    os << std::left << std::setw(6) << "n" << std::setw(14) << "rotations" << std::setw(12)
       << "compute_s" << std::setw(14) << "traffic_MB" << std::setw(12) << "comm_s"
       << std::setw(11) << "refreshes" << std::setw(9) << "depth" << std::setw(9) << "feasible"
       << "scheme\n";
    for (const auto& e : r.per_split) {
        os << std::left << std::setw(6) << e.split_index << std::setw(14)
           << e.rotations_per_epoch << std::setw(12) << std::fixed << std::setprecision(3)
           << e.compute_seconds << std::setw(14) << std::setprecision(6)
           << e.traffic_bytes / (1024.0 * 1024.0) << std::setw(12) << std::setprecision(3)
           << e.comm_seconds << std::setw(11) << e.refreshes_per_epoch << std::setw(9)
           << e.depth_mu << std::setw(9) << (e.feasible ? "yes" : "no")
           << (e.boundary_scheme == PackingScheme::one_level_scalar ? "scalar" : "batch")
           << "\n";
        os.unsetf(std::ios::fixed);
    }
    if (r.recommended_split) {
        os << "recommended split: n=" << *r.recommended_split
           << (r.recommendation_feasible ? "" : " (best effort; nothing meets the target)")
           << ", max boundary size " << r.max_boundary_size << "\n";
    }
    return os.str();
}

}  // namespace hesplit
