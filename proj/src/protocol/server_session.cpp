// Server role of the split training protocol. This translation unit never
// touches SecretKey or label data: the dataset's label block is cleared on
// construction and decryption capability does not exist here.

#include <chrono>

#include "hesplit/protocol/session.hpp"
#include "hesplit/util/parallel.hpp"
#include "hesplit/util/rng.hpp"
#include "wire_common.hpp"

namespace hesplit {

using wire::Channel;
using wire::DensePack;
using wire::json;

namespace {

// One server weight group in the per-column replicated layout: ciphertext k
// carries column k (bias last) replicated across every sample block.
struct ColRepWeights {
    std::vector<CipherValue> columns;
    int rows = 0;  // output size
    int cols = 0;  // input size + 1 (bias)
    DensePack pack;
};

Eigen::VectorXd replicated_column(const Eigen::VectorXd& col, const DensePack& pack, int slots) {
    Eigen::VectorXd image = Eigen::VectorXd::Zero(slots);
    for (int s = 0; s < pack.samples_per_ct; ++s) {
        image.segment(s * pack.block_len, col.size()) = col;
    }
    return image;
}

}  // namespace

struct ServerSession::State {
    SplitModelConfig config;
    Dataset data;  // labels cleared
    Transport& transport;

    ckks::CryptoParams params;
    std::optional<Backend> backend;
    std::optional<Channel> channel;

    // Boundary (one-level) weight group.
    ColRepWeights boundary;
    int boundary_level_floor = 1;  // refresh below this before an update

    // Deeper layers (split_index > 1): forward packing carries the
    // transposed weights with a bias row; backward packing carries the
    // weights column-per-input, count padded so rotation counts follow the
    // formula.
    std::vector<PackedWeights> fwd_layers;
    std::vector<PackedWeights> bwd_layers;

    // Pre-encrypted sample rows when the data itself is encrypted.
    std::vector<CipherValue> enc_rows;          // matmat row layout (n > 1)
    std::vector<std::vector<CipherValue>> enc_bcast;  // per column, per group (n == 1)

    long matmat_rotations = 0;
    long aux_rotations = 0;
    int refreshes = 0;
    long fwd_cts = 0, grad_cts = 0;

    State(const SplitModelConfig& c, Dataset ds, Transport& t)
        : config(c), data(std::move(ds)), transport(t), params(c.crypto_params()) {
        data.labels.resize(0, 0);  // labels never live in server memory
    }

    int refresh_every() const {
        return config.refresh_every_updates > 0 ? config.refresh_every_updates
                                                : std::max(1, params.level_budget() - 1);
    }

    // Aligns and subtracts a gradient from a weight ciphertext, spending
    // exactly one weight level per update (the documented ledger policy).
    CipherValue subtract_update(const CipherValue& w_in, CipherValue g) {
        if (w_in.level() < 1) throw LevelError("weight ledger underflow: refresh policy bug");
        const int lvl = std::min(w_in.level() - 1, g.level());
        CipherValue w = w_in;
        if (std::abs(g.scale() - w.scale()) <= 1e-9 * w.scale()) {
            w = backend->level_drop(w, lvl);
        } else {
            if (w.level() > lvl + 1) w = backend->level_drop(w, lvl + 1);
            w = backend->renormalize(w, g.scale());
        }
        if (g.level() > lvl) g = backend->level_drop(g, lvl);
        return backend->sub(w, g);
    }

    // ---- handshake -------------------------------------------------------

    void handshake() {
        const auto digest = config_digest(config);
        channel.emplace(transport, wire::session_id_from_digest(digest));
        const Frame hello = channel->recv(MsgType::HELLO);
        if (hello.payload.size() != 32 ||
            !std::equal(digest.begin(), digest.end(), hello.payload.begin())) {
            channel->send(MsgType::SHUTDOWN);
            throw ProtocolError("handshake: configuration digests differ");
        }
        channel->send(MsgType::HELLO, {digest.begin(), digest.end()});

        const Frame keys = channel->recv(MsgType::PUBKEYS);
        if (backend_kind_from_string(config.backend) == BackendKind::ckks) {
            auto pub = ckks::parse_public_material(keys.payload, params);
            backend.emplace(
                Backend::ckks(params, std::move(pub), derive_seed(config.seed, 0xe5)));
        } else {
            backend.emplace(Backend::noise_sim(params, config.noise_model(params),
                                               derive_seed(config.seed, 0xe5)));
        }
    }

    // ---- weight initialization ------------------------------------------

    Eigen::MatrixXd init_weight_matrix(int layer) const {
        // Must match init_model's per-layer seeding exactly so the monolithic
        // oracle reproduces the protocol bit for bit.
        const auto layers = protocol_layers(config);
        Rng rng(derive_seed(config.seed, layer));
        const auto& spec = layers[layer];
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in_size));
        Eigen::MatrixXd W(spec.out_size, spec.in_size);
        for (int i = 0; i < W.rows(); ++i) {
            for (int j = 0; j < W.cols(); ++j) W(i, j) = rng.uniform(-bound, bound);
        }
        return W;
    }

    ColRepWeights encrypt_colrep(const Eigen::MatrixXd& W_with_bias) {
        ColRepWeights cw;
        cw.rows = static_cast<int>(W_with_bias.rows());
        cw.cols = static_cast<int>(W_with_bias.cols());
        cw.pack = DensePack::layout(cw.rows, static_cast<int>(backend->slot_count()));
        cw.columns.resize(cw.cols);
        parallel_for(cw.cols, [&](std::size_t k) {
            cw.columns[k] = backend->encrypt(replicated_column(
                W_with_bias.col(static_cast<Eigen::Index>(k)), cw.pack,
                static_cast<int>(backend->slot_count())));
        });
        return cw;
    }

    void initialize_weights() {
        const int n = config.split_index;
        // Boundary layer n: weights plus bias as a trailing column.
        Eigen::MatrixXd Wn = init_weight_matrix(n - 1);
        Eigen::MatrixXd Wb(Wn.rows(), Wn.cols() + 1);
        Wb << Wn, Eigen::VectorXd::Zero(Wn.rows());
        boundary = encrypt_colrep(Wb);

        for (int l = 0; l + 1 < n; ++l) {
            const Eigen::MatrixXd W = init_weight_matrix(l);
            // Forward: B = [W^T ; bias row], columns indexed by output.
            Eigen::MatrixXd Bf(W.cols() + 1, W.rows());
            Bf << W.transpose(), Eigen::RowVectorXd::Zero(W.rows());
            fwd_layers.push_back(pack_columns_rotsum(Bf, *backend, false));
            // Backward: columns indexed by input, count padded.
            bwd_layers.push_back(pack_columns_rotsum(W, *backend, true));
        }

        if (config.encrypt_data) prepare_encrypted_data();

        json ack;
        ack["boundary_ciphertexts"] = boundary.cols;
        ack["matmat_layers"] = static_cast<int>(fwd_layers.size());
        channel->send(MsgType::ENC_WEIGHTS_ACK, wire::payload_with_header(ack, {}));
    }

    void prepare_encrypted_data() {
        const int n = config.split_index;
        const int slots = static_cast<int>(backend->slot_count());
        if (n == 1) {
            // Broadcast layout per weight column and sample group.
            const auto batches = batch_schedule(data.train_indices, config.batch_size);
            enc_bcast.assign(boundary.cols, {});
            for (auto& v : enc_bcast) v.reserve(64);
            for (const auto& batch : batches) {
                const int groups = boundary.pack.groups(static_cast<int>(batch.size()));
                for (int g = 0; g < groups; ++g) {
                    for (int k = 0; k < boundary.cols; ++k) {
                        Eigen::VectorXd image = Eigen::VectorXd::Zero(slots);
                        for (int s = 0; s < boundary.pack.samples_per_ct; ++s) {
                            const std::size_t idx = static_cast<std::size_t>(g) *
                                                        boundary.pack.samples_per_ct + s;
                            if (idx >= batch.size()) break;
                            const double x = k + 1 < boundary.cols
                                                 ? data.features(batch[idx], k)
                                                 : 1.0;
                            image.segment(s * boundary.pack.block_len, boundary.pack.block_len)
                                .setConstant(x);
                        }
                        enc_bcast[k].push_back(backend->encrypt(image));
                    }
                }
            }
        } else {
            // Replicated-row layout against the first matmat layer.
            const auto& lay = fwd_layers[0].layout;
            enc_rows.resize(data.features.rows());
            parallel_for(enc_rows.size(), [&](std::size_t i) {
                Eigen::VectorXd row(data.features.cols() + 1);
                row << data.features.row(static_cast<Eigen::Index>(i)).transpose(), 1.0;
                enc_rows[i] = backend->encrypt(replicate_row_for_rotsum(row, lay, slots, 0));
            });
        }
    }

    // ---- refresh machinery ----------------------------------------------

    // Sends ciphertexts for a value-preserving refresh; the response holds
    // fresh full-level replacements.
    std::vector<CipherValue> refresh(std::vector<CipherValue> cts) {
        json header;
        header["items"] = json::array();
        std::vector<std::vector<uint8_t>> blobs;
        for (const auto& ct : cts) {
            header["items"].push_back({{"mode", "refresh"}});
            blobs.push_back(backend->serialize(ct));
        }
        channel->send(MsgType::REFRESH_REQ, wire::payload_with_header(header, blobs));
        const Frame resp = channel->recv(MsgType::REFRESH_RESP);
        auto [h, rblobs] = wire::split_payload(resp.payload);
        std::vector<CipherValue> out;
        out.reserve(rblobs.size());
        for (const auto& b : rblobs) out.push_back(backend->parse(b));
        ++refreshes;
        return out;
    }

    // Asks the client to re-pack marked dot products into a requested layout.
    std::vector<CipherValue> repack(const std::vector<CipherValue>& cts, const json& spec) {
        json header;
        header["items"] = json::array();
        std::vector<std::vector<uint8_t>> blobs;
        for (const auto& ct : cts) blobs.push_back(backend->serialize(ct));
        json item = spec;
        item["mode"] = "repack";
        item["blob_count"] = static_cast<int>(blobs.size());
        header["items"].push_back(item);
        channel->send(MsgType::REFRESH_REQ, wire::payload_with_header(header, blobs));
        const Frame resp = channel->recv(MsgType::REFRESH_RESP);
        auto [h, rblobs] = wire::split_payload(resp.payload);
        std::vector<CipherValue> out;
        out.reserve(rblobs.size());
        for (const auto& b : rblobs) out.push_back(backend->parse(b));
        ++refreshes;
        return out;
    }

    // ---- n = 1 fast path --------------------------------------------------

    Eigen::VectorXd column_mask(const std::vector<int>& batch, int g, int k) const {
        const int slots = static_cast<int>(backend->slot_count());
        Eigen::VectorXd mask = Eigen::VectorXd::Zero(slots);
        for (int s = 0; s < boundary.pack.samples_per_ct; ++s) {
            const std::size_t idx =
                static_cast<std::size_t>(g) * boundary.pack.samples_per_ct + s;
            if (idx >= batch.size()) break;
            const double x = k + 1 < boundary.cols ? data.features(batch[idx], k) : 1.0;
            mask.segment(s * boundary.pack.block_len, boundary.pack.block_len).setConstant(x);
        }
        return mask;
    }

    std::vector<CipherValue> forward_one_level(const std::vector<int>& batch, long group_base) {
        const int groups = boundary.pack.groups(static_cast<int>(batch.size()));
        std::vector<CipherValue> out(groups);
        parallel_for(groups, [&](std::size_t g) {
            CipherValue acc;
            bool first = true;
            for (int k = 0; k < boundary.cols; ++k) {
                CipherValue term;
                if (config.encrypt_data) {
                    const auto& x = enc_bcast[k][group_base + g];
                    const int lvl = std::min(boundary.columns[k].level(), x.level());
                    term = backend->mul_ct(backend->level_drop(boundary.columns[k], lvl),
                                           backend->level_drop(x, lvl));
                } else {
                    term = backend->mul_plain(boundary.columns[k],
                                              column_mask(batch, static_cast<int>(g), k));
                }
                acc = first ? std::move(term) : backend->add(acc, term);
                first = false;
            }
            out[g] = std::move(acc);
        });
        return out;
    }

    void update_one_level(const std::vector<int>& batch, const std::vector<CipherValue>& deltas,
                          long group_base) {
        const int groups = static_cast<int>(deltas.size());
        const int fold_steps = static_cast<int>(std::log2(boundary.pack.samples_per_ct));
        parallel_for(boundary.cols, [&](std::size_t k) {
            CipherValue acc;
            bool first = true;
            for (int g = 0; g < groups; ++g) {
                CipherValue term;
                if (config.encrypt_data) {
                    const auto& x = enc_bcast[k][group_base + g];
                    const int lvl = std::min(deltas[g].level(), x.level());
                    term = backend->mul_ct(backend->level_drop(deltas[g], lvl),
                                           backend->level_drop(x, lvl));
                } else {
                    term = backend->mul_plain(deltas[g],
                                              column_mask(batch, g, static_cast<int>(k)));
                }
                acc = first ? std::move(term) : backend->add(acc, term);
                first = false;
            }
            // Fold sample blocks so every block carries the batch sum.
            for (int t = 0; t < fold_steps; ++t) {
                acc = backend->add(acc, backend->rotate(acc, boundary.pack.block_len << t));
            }
            boundary.columns[k] = subtract_update(boundary.columns[k], std::move(acc));
        });
        aux_rotations += static_cast<long>(boundary.cols) * fold_steps;
    }

    void literal_update(const std::vector<CipherValue>& grad_cols) {
        // Algorithm-2-literal reading: the client computed and encrypted the
        // whole weight gradient; the server only subtracts.
        parallel_for(boundary.cols, [&](std::size_t k) {
            boundary.columns[k] = subtract_update(boundary.columns[k], grad_cols[k]);
        });
    }

    // ---- n > 1 matmat path -------------------------------------------------

    // Runs the encrypted forward for one batch, returning the boundary
    // ciphertexts (dense groups); keeps per-layer caches for the backward.
    struct DeepCache {
        // Per layer: per-sample replicated activation rows (inputs of that
        // layer, bias slot included), refreshed to full level.
        std::vector<std::vector<CipherValue>> act_rows;
        // Per layer: per-sample pre-activation rows (for the derivative).
        std::vector<std::vector<CipherValue>> z_rows;
        // Boundary-layer broadcast inputs per column per group.
        std::vector<std::vector<CipherValue>> bcast_in;
    };

    std::vector<CipherValue> forward_deep(const std::vector<int>& batch, DeepCache& cache) {
        const int n = config.split_index;
        const int slots = static_cast<int>(backend->slot_count());
        const int b = static_cast<int>(batch.size());

        // Layer inputs as replicated rows: plaintext samples or pre-encrypted.
        std::vector<CipherValue> rows(b);
        if (config.encrypt_data) {
            for (int s = 0; s < b; ++s) rows[s] = enc_rows[batch[s]];
        } else {
            const auto& lay = fwd_layers[0].layout;
            for (int s = 0; s < b; ++s) {
                Eigen::VectorXd row(data.features.cols() + 1);
                row << data.features.row(batch[s]).transpose(), 1.0;
                rows[s] = backend->encrypt(replicate_row_for_rotsum(row, lay, slots, 0));
            }
        }
        cache.act_rows.push_back(rows);
        cache.z_rows.emplace_back();  // inputs have no pre-activation

        for (int l = 0; l + 1 < n; ++l) {
            // Encrypted product with the forward-packed weights.
            std::vector<CipherValue> marked;
            std::vector<int> marks_per_row;
            for (int s = 0; s < b; ++s) {
                MarkedResult r = matmat_rotsum(std::vector<CipherValue>{rows[s]}, fwd_layers[l],
                                               *backend);
                matmat_rotations += r.rotations_used;
                marks_per_row.push_back(static_cast<int>(r.ciphertexts.size()));
                for (auto& ct : r.ciphertexts) marked.push_back(std::move(ct));
            }
            // Client round: marks -> fresh replicated rows with a bias slot,
            // laid out for the next product (or the boundary op).
            const auto& lay = fwd_layers[l].layout;
            const bool last = l + 2 == n;
            const int next_block = last ? DensePack::layout(config.layer_sizes[l + 2],
                                                            slots).block_len
                                        : fwd_layers[l + 1].layout.block_len;
            json spec;
            spec["stride"] = lay.block_len;
            spec["cols"] = lay.cols;
            spec["cols_per_ct"] = lay.cols_per_ct;
            spec["cts_per_row"] = marks_per_row[0];
            spec["rows"] = b;
            spec["out"] = "rows";
            spec["out_block"] = l + 2 < n ? fwd_layers[l + 1].layout.block_len : next_block;
            spec["append_one"] = l + 2 < n;  // bias slot for the next product
            std::vector<CipherValue> z_rows = repack(marked, spec);

            // Activation under encryption, then refresh for the next level.
            const auto layers = protocol_layers(config);
            const PolyApprox act = chebyshev_fit_sigmoid(layers[l].degree, layers[l].lo,
                                                         layers[l].hi);
            std::vector<CipherValue> next_rows(b);
            for (int s = 0; s < b; ++s) {
                CipherValue a = eval_poly_encrypted(z_rows[s], act, *backend);
                next_rows[s] = std::move(a);
            }
            next_rows = refresh(std::move(next_rows));
            cache.z_rows.push_back(std::move(z_rows));
            cache.act_rows.push_back(next_rows);
            rows = std::move(cache.act_rows.back());
        }

        // Boundary one-level op needs the inputs in broadcast-per-column
        // layout; the client derives it from the last activation rows.
        json spec;
        spec["rows"] = b;
        spec["out"] = "bcast";
        spec["boundary"] = config.layer_sizes[n];
        spec["in_len"] = config.layer_sizes[n - 1];
        std::vector<CipherValue> bcast = repack(rows, spec);
        const int groups = boundary.pack.groups(b);
        cache.bcast_in.assign(boundary.cols, {});
        std::size_t pos = 0;
        for (int k = 0; k < boundary.cols; ++k) {
            for (int g = 0; g < groups; ++g) cache.bcast_in[k].push_back(bcast.at(pos++));
        }

        std::vector<CipherValue> out(groups);
        for (int g = 0; g < groups; ++g) {
            CipherValue acc;
            bool first = true;
            for (int k = 0; k < boundary.cols; ++k) {
                const auto& x = cache.bcast_in[k][g];
                const int lvl = std::min(boundary.columns[k].level(), x.level());
                CipherValue term = backend->mul_ct(backend->level_drop(boundary.columns[k], lvl),
                                                   backend->level_drop(x, lvl));
                acc = first ? std::move(term) : backend->add(acc, term);
                first = false;
            }
            out[g] = std::move(acc);
        }
        return out;
    }

    void backward_deep(const std::vector<int>& batch, const std::vector<CipherValue>& deltas,
                       DeepCache& cache) {
        const int n = config.split_index;
        const int b = static_cast<int>(batch.size());
        const int slots = static_cast<int>(backend->slot_count());
        const int fold_steps = static_cast<int>(std::log2(boundary.pack.samples_per_ct));

        // Boundary weight gradient: delta (dense) x cached broadcast inputs.
        {
            parallel_for(boundary.cols, [&](std::size_t k) {
                CipherValue acc;
                bool first = true;
                for (std::size_t g = 0; g < deltas.size(); ++g) {
                    const auto& x = cache.bcast_in[k][g];
                    const int lvl = std::min(deltas[g].level(), x.level());
                    CipherValue term = backend->mul_ct(backend->level_drop(deltas[g], lvl),
                                                       backend->level_drop(x, lvl));
                    acc = first ? std::move(term) : backend->add(acc, term);
                    first = false;
                }
                for (int t = 0; t < fold_steps; ++t) {
                    acc = backend->add(acc, backend->rotate(acc, boundary.pack.block_len << t));
                }
                boundary.columns[k] = subtract_update(boundary.columns[k], std::move(acc));
            });
            aux_rotations += static_cast<long>(boundary.cols) * fold_steps;
        }

        // Propagate the delta through the deeper layers.
        // delta_rows: per-sample replicated rows of dJ/dZ at layer l+1.
        json to_rows;
        to_rows["rows"] = b;
        to_rows["out"] = "delta_rows";
        to_rows["boundary"] = config.layer_sizes[n];
        to_rows["out_block"] =
            n > 1 ? bwd_layers[n - 2].layout.block_len
                  : DensePack::layout(config.layer_sizes[n], slots).block_len;
        std::vector<CipherValue> delta_rows = repack(deltas, to_rows);

        for (int l = n - 2; l >= 0; --l) {
            // delta_prev_hat = delta_rows x W (columns per input, padded).
            std::vector<CipherValue> marked;
            int cts_per_row = 0;
            for (int s = 0; s < b; ++s) {
                MarkedResult r = matmat_rotsum(std::vector<CipherValue>{delta_rows[s]},
                                               bwd_layers[l], *backend);
                matmat_rotations += r.rotations_used;
                cts_per_row = static_cast<int>(r.ciphertexts.size());
                for (auto& ct : r.ciphertexts) marked.push_back(std::move(ct));
            }
            const auto& lay = bwd_layers[l].layout;

            // Derivative of the encrypted activation on the cached Z rows.
            const auto layers = protocol_layers(config);
            const PolyApprox dact =
                chebyshev_fit_sigmoid(layers[l].degree, layers[l].lo, layers[l].hi).derivative();
            std::vector<CipherValue> dpsi(b);
            for (int s = 0; s < b; ++s) {
                dpsi[s] = eval_poly_encrypted(cache.z_rows[l + 1][s], dact, *backend);
            }

            // Client round: marked backprop dots -> replicated rows matching
            // the dpsi layout.
            json spec;
            spec["stride"] = lay.block_len;
            spec["cols"] = lay.cols;
            spec["cols_per_ct"] = lay.cols_per_ct;
            spec["cts_per_row"] = cts_per_row;
            spec["rows"] = b;
            spec["out"] = "rows";
            spec["out_block"] = lay.block_len;
            spec["append_one"] = false;
            std::vector<CipherValue> dhat_rows = repack(marked, spec);

            std::vector<CipherValue> new_delta(b);
            for (int s = 0; s < b; ++s) {
                auto& dh = dhat_rows[s];
                auto& dp = dpsi[s];
                const int lvl = std::min(dh.level(), dp.level());
                new_delta[s] = backend->mul_ct(backend->level_drop(dh, lvl),
                                               backend->level_drop(dp, lvl));
            }
            new_delta = refresh(std::move(new_delta));

            // Weight gradient of layer l from delta rows and cached inputs:
            // ask the client for dense/broadcast forms, then the colrep fold.
            update_deep_layer(l, new_delta, cache.act_rows[l], b);
            delta_rows = std::move(new_delta);
        }
    }

    // Updates layer l from per-sample delta rows and cached input rows: the
    // weight gradient is formed homomorphically in the backward layout and
    // subtracted server-side; a rebuild round then re-derives the forward
    // layout (and applies the bias-column update) from the refreshed result.
    void update_deep_layer(int l, const std::vector<CipherValue>& delta_rows,
                           const std::vector<CipherValue>& input_rows, int b) {
        const int slots = static_cast<int>(backend->slot_count());
        const int out_size = config.layer_sizes[l + 1];
        const int in_cols = config.layer_sizes[l] + 1;  // bias rides as a column
        const DensePack dp = DensePack::layout(out_size, slots);

        // Client round: delta rows -> dense groups; input rows -> broadcast
        // per input column aligned with those groups.
        json spec;
        spec["rows"] = b;
        spec["out"] = "grad_pair";
        spec["boundary"] = out_size;
        spec["in_len"] = in_cols - 1;
        std::vector<CipherValue> cts;
        for (const auto& r : delta_rows) cts.push_back(r);
        for (const auto& r : input_rows) cts.push_back(r);
        std::vector<CipherValue> packed = repack(cts, spec);
        const int groups = dp.groups(b);
        std::vector<CipherValue> delta_dense(packed.begin(), packed.begin() + groups);
        const int fold_steps = static_cast<int>(std::log2(dp.samples_per_ct));

        // Per-input gradient columns, batch-summed into every block.
        std::vector<CipherValue> grad_cols(in_cols);
        parallel_for(in_cols, [&](std::size_t k) {
            CipherValue acc;
            bool first = true;
            for (int g = 0; g < groups; ++g) {
                const auto& x = packed[groups + k * groups + g];
                const auto& d = delta_dense[g];
                const int lvl = std::min(d.level(), x.level());
                CipherValue term = backend->mul_ct(backend->level_drop(d, lvl),
                                                   backend->level_drop(x, lvl));
                acc = first ? std::move(term) : backend->add(acc, term);
                first = false;
            }
            for (int t = 0; t < fold_steps; ++t) {
                acc = backend->add(acc, backend->rotate(acc, dp.block_len << t));
            }
            grad_cols[k] = std::move(acc);
        });
        aux_rotations += static_cast<long>(in_cols) * fold_steps;

        // Gather gradient blocks into the backward weight layout and
        // subtract homomorphically.
        const auto& lay = bwd_layers[l].layout;
        for (std::size_t m = 0; m < bwd_layers[l].ciphertexts.size(); ++m) {
            CipherValue gm;
            bool first = true;
            for (int j = 0; j < lay.cols_per_ct; ++j) {
                const int col = static_cast<int>(m) * lay.cols_per_ct + j;
                if (col >= lay.cols) break;
                Eigen::VectorXd mask = Eigen::VectorXd::Zero(slots);
                mask.segment(j * lay.block_len, lay.block_len).setOnes();
                CipherValue term = backend->mul_plain(grad_cols[col], mask);
                gm = first ? std::move(term) : backend->add(gm, term);
                first = false;
            }
            if (first) continue;
            bwd_layers[l].ciphertexts[m] = subtract_update(bwd_layers[l].ciphertexts[m],
                                                           std::move(gm));
        }

        // Rebuild round: fresh backward cts and the forward layout derived
        // from the updated weights; the bias gradient ct travels along.
        json rebuild;
        rebuild["out"] = "weights_rebuild";
        rebuild["layer"] = l;
        rebuild["bwd_count"] = static_cast<int>(bwd_layers[l].ciphertexts.size());
        std::vector<CipherValue> payload;
        for (const auto& w : bwd_layers[l].ciphertexts) payload.push_back(w);
        payload.push_back(grad_cols[in_cols - 1]);  // bias column gradient
        for (const auto& w : fwd_layers[l].ciphertexts) payload.push_back(w);
        std::vector<CipherValue> rebuilt = repack(payload, rebuild);
        const std::size_t bwd_count = bwd_layers[l].ciphertexts.size();
        if (rebuilt.size() != bwd_count + fwd_layers[l].ciphertexts.size()) {
            throw ProtocolError("weights_rebuild: unexpected ciphertext count");
        }
        for (std::size_t i = 0; i < bwd_count; ++i) bwd_layers[l].ciphertexts[i] = rebuilt[i];
        for (std::size_t i = 0; i < fwd_layers[l].ciphertexts.size(); ++i) {
            fwd_layers[l].ciphertexts[i] = rebuilt[bwd_count + i];
        }
    }

    // ---- epoch driver ------------------------------------------------------

    TrainOutcome run() {
        handshake();
        initialize_weights();
        const auto batches = batch_schedule(data.train_indices, config.batch_size);
        TrainOutcome out;

        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            const auto t0 = std::chrono::steady_clock::now();
            EpochMetrics m;
            m.epoch = epoch;
            const long rot0 = matmat_rotations, aux0 = aux_rotations;
            const int refresh0 = refreshes;
            int refreshes_this_epoch_cap = config.refresh_cap_per_epoch;
            long group_base = 0;

            for (std::size_t bi = 0; bi < batches.size(); ++bi) {
                const auto& batch = batches[bi];
                if (refreshes - refresh0 > refreshes_this_epoch_cap) {
                    throw ProtocolError("refresh flood: per-epoch cap exceeded");
                }
                // Weight-ledger policy: refresh before the update would push
                // the boundary group below the working floor.
                if (boundary.columns[0].level() - 1 < boundary_level_floor) {
                    boundary.columns = refresh(std::move(boundary.columns));
                }

                DeepCache cache;
                std::vector<CipherValue> fwd =
                    config.split_index == 1 ? forward_one_level(batch, group_base)
                                            : forward_deep(batch, cache);
                json header;
                header["batch"] = bi;
                header["samples"] = batch.size();
                std::vector<std::vector<uint8_t>> blobs;
                for (const auto& ct : fwd) blobs.push_back(backend->serialize(ct));
                m.fwd_ciphertexts += static_cast<long>(blobs.size());
                channel->send(MsgType::FWD_OUT, wire::payload_with_header(header, blobs));

                const Frame grad = channel->recv(MsgType::BOUNDARY_GRAD);
                auto [gh, gblobs] = wire::split_payload(grad.payload);
                std::vector<CipherValue> deltas;
                deltas.reserve(gblobs.size());
                for (const auto& bl : gblobs) deltas.push_back(backend->parse(bl));
                m.grad_ciphertexts += static_cast<long>(deltas.size());

                if (config.split_index == 1) {
                    if (gh.value("literal", false)) {
                        literal_update(deltas);
                    } else {
                        update_one_level(batch, deltas, group_base);
                    }
                } else {
                    backward_deep(batch, deltas, cache);
                }
                group_base += boundary.pack.groups(static_cast<int>(batch.size()));
            }

            json done;
            done["epoch"] = epoch;
            done["matmat_rotations"] = matmat_rotations - rot0;
            done["aux_rotations"] = aux_rotations - aux0;
            done["refreshes"] = refreshes - refresh0;
            channel->send(MsgType::EPOCH_DONE, wire::payload_with_header(done, {}));
            channel->recv(MsgType::EPOCH_DONE);

            m.matmat_rotations = matmat_rotations - rot0;
            m.aux_rotations = aux_rotations - aux0;
            m.refreshes = refreshes - refresh0;
            m.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            m.bytes_sent = channel->bytes_sent();
            m.bytes_received = channel->bytes_received();
            out.epochs.push_back(m);
        }

        // Ship the final encrypted weights so the key owner can reconstruct
        // the trained model.
        json fin;
        fin["boundary_cols"] = boundary.cols;
        fin["boundary_rows"] = boundary.rows;
        fin["block"] = boundary.pack.block_len;
        fin["deep_layers"] = static_cast<int>(bwd_layers.size());
        std::vector<std::vector<uint8_t>> blobs;
        for (const auto& ct : boundary.columns) blobs.push_back(backend->serialize(ct));
        for (std::size_t l = 0; l < bwd_layers.size(); ++l) {
            fin["bwd_block_" + std::to_string(l)] = bwd_layers[l].layout.block_len;
            fin["bwd_cols_" + std::to_string(l)] = bwd_layers[l].layout.cols;
            fin["bwd_cols_per_ct_" + std::to_string(l)] = bwd_layers[l].layout.cols_per_ct;
            fin["bwd_count_" + std::to_string(l)] =
                static_cast<int>(bwd_layers[l].ciphertexts.size());
            fin["bwd_rows_" + std::to_string(l)] = config.layer_sizes[l + 1];
            for (const auto& ct : bwd_layers[l].ciphertexts) {
                blobs.push_back(backend->serialize(ct));
            }
            // Forward packing carries the bias row; ship it for the bias
            // reconstruction.
            fin["fwd_block_" + std::to_string(l)] = fwd_layers[l].layout.block_len;
            fin["fwd_cols_" + std::to_string(l)] = fwd_layers[l].layout.cols;
            fin["fwd_cols_per_ct_" + std::to_string(l)] = fwd_layers[l].layout.cols_per_ct;
            fin["fwd_count_" + std::to_string(l)] =
                static_cast<int>(fwd_layers[l].ciphertexts.size());
            fin["fwd_rows_" + std::to_string(l)] = config.layer_sizes[l] + 1;
            for (const auto& ct : fwd_layers[l].ciphertexts) {
                blobs.push_back(backend->serialize(ct));
            }
        }
        channel->send(MsgType::SHUTDOWN, wire::payload_with_header(fin, blobs));
        channel->recv(MsgType::SHUTDOWN);
        return out;
    }
};

ServerSession::ServerSession(const SplitModelConfig& config, Dataset dataset,
                             Transport& transport)
    : st_(std::make_unique<State>(config, std::move(dataset), transport)) {}

ServerSession::~ServerSession() = default;

TrainOutcome ServerSession::run() { return st_->run(); }

}  // namespace hesplit
