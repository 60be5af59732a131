// Client role: owns the labels, the plaintext model segment and the only
// decryption capability in the protocol.

#include <chrono>

#include "hesplit/ckks/serialize.hpp"
#include "hesplit/protocol/session.hpp"
#include "hesplit/util/rng.hpp"
#include "wire_common.hpp"

namespace hesplit {

using wire::Channel;
using wire::DensePack;
using wire::json;

struct ClientSession::State {
    SplitModelConfig config;
    Dataset data;
    Transport& transport;

    ckks::CryptoParams params;
    std::optional<Backend> backend;
    std::optional<Decryptor> decryptor;
    std::optional<Channel> channel;

    ModelState client_model;  // layers n+1 .. n+k
    DensePack pack;           // dense boundary layout
    int batches_done = 0;

    State(const SplitModelConfig& c, Dataset ds, Transport& t)
        : config(c), data(std::move(ds)), transport(t), params(c.crypto_params()),
          pack(DensePack::layout(c.layer_sizes[c.split_index],
                                 static_cast<int>(params.slot_count()))) {}

    // ---- handshake ---------------------------------------------------------

    void handshake() {
        const auto digest = config_digest(config);
        channel.emplace(transport, wire::session_id_from_digest(digest));
        channel->send(MsgType::HELLO, {digest.begin(), digest.end()});
        const Frame hello = channel->recv_any();
        if (hello.type == MsgType::SHUTDOWN) {
            throw ProtocolError("handshake: peer aborted (configuration digests differ)");
        }
        if (hello.type != MsgType::HELLO || hello.payload.size() != 32 ||
            !std::equal(digest.begin(), digest.end(), hello.payload.begin())) {
            throw ProtocolError("handshake: configuration digests differ");
        }

        if (backend_kind_from_string(config.backend) == BackendKind::ckks) {
            Rng rng(derive_seed(config.seed, 0xc11e47));
            auto keys = ckks::keygen(params, ckks::default_rotation_steps(params), rng);
            channel->send(MsgType::PUBKEYS,
                          ckks::serialize_public_material(keys.pub, params));
            backend.emplace(
                Backend::ckks(params, keys.pub, derive_seed(config.seed, 0xc11e48)));
            decryptor.emplace(*backend, std::move(keys.secret));
        } else {
            channel->send(MsgType::PUBKEYS);
            backend.emplace(Backend::noise_sim(params, config.noise_model(params),
                                               derive_seed(config.seed, 0xc11e48)));
            decryptor.emplace(*backend);
        }
    }

    void init_client_model() {
        const auto all_layers = protocol_layers(config);
        std::vector<LayerSpec> own(all_layers.begin() + config.split_index, all_layers.end());
        client_model = init_model(own, config.learning_rate, config.loss_kind(), config.seed);
        // Per-layer seeds must match the monolith's numbering.
        for (std::size_t l = 0; l < own.size(); ++l) {
            Rng rng(derive_seed(config.seed, config.split_index + l));
            const double bound = 1.0 / std::sqrt(static_cast<double>(own[l].in_size));
            for (int i = 0; i < client_model.weights[l].rows(); ++i) {
                for (int j = 0; j < client_model.weights[l].cols(); ++j) {
                    client_model.weights[l](i, j) = rng.uniform(-bound, bound);
                }
            }
        }
    }

    // ---- dense boundary packing ---------------------------------------------

    // Rows of `values` (samples x width) packed block-per-sample.
    std::vector<CipherValue> dense_pack(const Eigen::MatrixXd& values) {
        const int slots = static_cast<int>(backend->slot_count());
        const int b = static_cast<int>(values.rows());
        const int groups = pack.groups(b);
        std::vector<CipherValue> out;
        out.reserve(groups);
        for (int g = 0; g < groups; ++g) {
            Eigen::VectorXd image = Eigen::VectorXd::Zero(slots);
            for (int s = 0; s < pack.samples_per_ct; ++s) {
                const int idx = g * pack.samples_per_ct + s;
                if (idx >= b) break;
                image.segment(s * pack.block_len, values.cols()) = values.row(idx);
            }
            out.push_back(backend->encrypt(image));
        }
        return out;
    }

    Eigen::MatrixXd dense_unpack(const std::vector<CipherValue>& cts, int samples, int width) {
        Eigen::MatrixXd out(samples, width);
        for (int idx = 0; idx < samples; ++idx) {
            const int g = idx / pack.samples_per_ct;
            const int s = idx % pack.samples_per_ct;
            const Eigen::VectorXd slots = decryptor->decrypt(cts.at(g));
            out.row(idx) = slots.segment(s * pack.block_len, width);
        }
        return out;
    }

    // ---- refresh / repack service -------------------------------------------

    void serve_refresh(const Frame& req) {
        auto [header, blobs] = wire::split_payload(req.payload);
        std::vector<CipherValue> in;
        in.reserve(blobs.size());
        for (const auto& b : blobs) in.push_back(backend->parse(b));

        std::vector<CipherValue> out;
        const auto& items = header.at("items");
        if (items.size() == 1 && items[0].value("mode", "refresh") == "repack") {
            out = serve_repack(items[0], in);
        } else {
            // Value-preserving refresh, one output per input.
            if (items.size() != in.size()) throw ProtocolError("refresh: item/blob mismatch");
            out.reserve(in.size());
            for (const auto& ct : in) {
                out.push_back(backend->encrypt(decryptor->decrypt(ct)));
            }
        }
        std::vector<std::vector<uint8_t>> rblobs;
        rblobs.reserve(out.size());
        for (const auto& ct : out) rblobs.push_back(backend->serialize(ct));
        channel->send(MsgType::REFRESH_RESP, wire::payload_with_header(json::object(), rblobs));
    }

    std::vector<CipherValue> serve_repack(const json& spec, const std::vector<CipherValue>& in) {
        const std::string out_kind = spec.at("out").get<std::string>();
        const int slots = static_cast<int>(backend->slot_count());
        std::vector<CipherValue> out;

        if (out_kind == "rows") {
            // Marked dot products -> replicated per-sample rows.
            const int stride = spec.at("stride").get<int>();
            const int cols = spec.at("cols").get<int>();
            const int cols_per_ct = spec.at("cols_per_ct").get<int>();
            const int cts_per_row = spec.at("cts_per_row").get<int>();
            const int rows = spec.at("rows").get<int>();
            const int out_block = spec.at("out_block").get<int>();
            const bool append_one = spec.value("append_one", false);
            for (int r = 0; r < rows; ++r) {
                Eigen::VectorXd v(cols + (append_one ? 1 : 0));
                for (int j = 0; j < cols; ++j) {
                    const auto& ct = in.at(r * cts_per_row + j / cols_per_ct);
                    v[j] = decryptor->decrypt(ct)[(j % cols_per_ct) * stride];
                }
                if (append_one) v[cols] = 1.0;
                Eigen::VectorXd image = Eigen::VectorXd::Zero(slots);
                for (int blk = 0; blk + 1 <= slots / out_block; ++blk) {
                    image.segment(blk * out_block, v.size()) = v;
                }
                out.push_back(backend->encrypt(image));
            }
        } else if (out_kind == "bcast") {
            // Per-sample rows -> per-column broadcast ciphertexts aligned
            // with the dense boundary groups; a constant-one column is
            // appended for the bias.
            const int rows = spec.at("rows").get<int>();
            const int in_len = spec.at("in_len").get<int>();
            const int boundary = spec.at("boundary").get<int>();
            const DensePack dp = DensePack::layout(boundary, slots);
            Eigen::MatrixXd values(rows, in_len + 1);
            for (int r = 0; r < rows; ++r) {
                const Eigen::VectorXd v = decryptor->decrypt(in.at(r));
                values.row(r).head(in_len) = v.head(in_len);
                values(r, in_len) = 1.0;
            }
            const int groups = dp.groups(rows);
            for (int k = 0; k <= in_len; ++k) {
                for (int g = 0; g < groups; ++g) {
                    Eigen::VectorXd image = Eigen::VectorXd::Zero(slots);
                    for (int s = 0; s < dp.samples_per_ct; ++s) {
                        const int idx = g * dp.samples_per_ct + s;
                        if (idx >= rows) break;
                        image.segment(s * dp.block_len, dp.block_len)
                            .setConstant(values(idx, k));
                    }
                    out.push_back(backend->encrypt(image));
                }
            }
        } else if (out_kind == "delta_rows") {
            // Dense boundary groups -> replicated per-sample rows.
            const int rows = spec.at("rows").get<int>();
            const int boundary = spec.at("boundary").get<int>();
            const int out_block = spec.at("out_block").get<int>();
            const DensePack dp = DensePack::layout(boundary, slots);
            for (int idx = 0; idx < rows; ++idx) {
                const int g = idx / dp.samples_per_ct;
                const int s = idx % dp.samples_per_ct;
                const Eigen::VectorXd v = decryptor->decrypt(in.at(g));
                Eigen::VectorXd row = v.segment(s * dp.block_len, boundary);
                Eigen::VectorXd image = Eigen::VectorXd::Zero(slots);
                for (int blk = 0; blk + 1 <= slots / out_block; ++blk) {
                    image.segment(blk * out_block, boundary) = row;
                }
                out.push_back(backend->encrypt(image));
            }
        } else if (out_kind == "grad_pair") {
            // b delta rows + b input rows -> dense delta groups followed by
            // per-input-column broadcasts (constant-one bias column last).
            const int rows = spec.at("rows").get<int>();
            const int out_size = spec.at("boundary").get<int>();
            const int in_len = spec.at("in_len").get<int>();
            const DensePack dp = DensePack::layout(out_size, slots);
            Eigen::MatrixXd deltas(rows, out_size);
            Eigen::MatrixXd inputs(rows, in_len + 1);
            for (int r = 0; r < rows; ++r) {
                deltas.row(r) = decryptor->decrypt(in.at(r)).head(out_size);
                inputs.row(r).head(in_len) = decryptor->decrypt(in.at(rows + r)).head(in_len);
                inputs(r, in_len) = 1.0;
            }
            const int groups = dp.groups(rows);
            for (int g = 0; g < groups; ++g) {
                Eigen::VectorXd image = Eigen::VectorXd::Zero(slots);
                for (int s = 0; s < dp.samples_per_ct; ++s) {
                    const int idx = g * dp.samples_per_ct + s;
                    if (idx >= rows) break;
                    image.segment(s * dp.block_len, out_size) = deltas.row(idx);
                }
                out.push_back(backend->encrypt(image));
            }
            for (int k = 0; k <= in_len; ++k) {
                for (int g = 0; g < groups; ++g) {
                    Eigen::VectorXd image = Eigen::VectorXd::Zero(slots);
                    for (int s = 0; s < dp.samples_per_ct; ++s) {
                        const int idx = g * dp.samples_per_ct + s;
                        if (idx >= rows) break;
                        image.segment(s * dp.block_len, dp.block_len)
                            .setConstant(inputs(idx, k));
                    }
                    out.push_back(backend->encrypt(image));
                }
            }
        } else if (out_kind == "weights_rebuild") {
            // Updated backward-layout weights + bias-gradient ct + stale
            // forward cts -> fresh backward cts and a rebuilt forward packing
            // (transposed weights with the updated bias row).
            const int layer = spec.at("layer").get<int>();
            const int bwd_count = spec.at("bwd_count").get<int>();
            const int out_size = config.layer_sizes[layer + 1];
            const int in_size = config.layer_sizes[layer];
            const auto bwd_lay = rotsum_layout(out_size, in_size, slots, true);
            const auto fwd_lay = rotsum_layout(in_size + 1, out_size, slots, false);

            Eigen::MatrixXd W(out_size, in_size);
            for (int t = 0; t < in_size; ++t) {
                const auto& ct = in.at(t / bwd_lay.cols_per_ct);
                const Eigen::VectorXd v = decryptor->decrypt(ct);
                W.col(t) = v.segment((t % bwd_lay.cols_per_ct) * bwd_lay.block_len, out_size);
            }
            const Eigen::VectorXd bias_grad =
                decryptor->decrypt(in.at(bwd_count)).head(out_size);
            // Stale forward cts still hold the previous bias row.
            Eigen::VectorXd bias(out_size);
            for (int j = 0; j < out_size; ++j) {
                const auto& ct = in.at(bwd_count + 1 + j / fwd_lay.cols_per_ct);
                const Eigen::VectorXd v = decryptor->decrypt(ct);
                bias[j] = v[(j % fwd_lay.cols_per_ct) * fwd_lay.block_len + in_size];
            }
            bias -= bias_grad;

            for (const auto& img : column_slot_vectors(W, bwd_lay, slots)) {
                out.push_back(backend->encrypt(img));
            }
            Eigen::MatrixXd Bf(in_size + 1, out_size);
            Bf << W.transpose(), bias.transpose();
            for (const auto& img : column_slot_vectors(Bf, fwd_lay, slots)) {
                out.push_back(backend->encrypt(img));
            }
        } else {
            throw ProtocolError("repack: unknown layout request " + out_kind);
        }
        return out;
    }

    // ---- training ------------------------------------------------------------

    TrainOutcome run() {
        handshake();
        init_client_model();
        channel->recv(MsgType::ENC_WEIGHTS_ACK);

        const auto batches = batch_schedule(data.train_indices, config.batch_size);
        const int n = config.split_index;
        const int boundary = config.layer_sizes[n];
        TrainOutcome out;

        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            const auto t0 = std::chrono::steady_clock::now();
            EpochMetrics m;
            m.epoch = epoch;
            double loss_sum = 0, acc_sum = 0;
            long samples = 0;

            for (const auto& batch : batches) {
                // Serve refresh/repack rounds until the forward output lands.
                Frame f = channel->recv_any();
                while (f.type == MsgType::REFRESH_REQ) {
                    serve_refresh(f);
                    f = channel->recv_any();
                }
                if (f.type != MsgType::FWD_OUT) {
                    throw ProtocolError(std::string("expected FWD_OUT, got ") +
                                        to_string(f.type));
                }
                auto [fh, fblobs] = wire::split_payload(f.payload);
                std::vector<CipherValue> fwd;
                fwd.reserve(fblobs.size());
                for (const auto& bl : fblobs) fwd.push_back(backend->parse(bl));
                m.fwd_ciphertexts += static_cast<long>(fwd.size());

                const int b = static_cast<int>(batch.size());
                const Eigen::MatrixXd z = dense_unpack(fwd, b, boundary);
                // Boundary activation applied after decryption.
                const Eigen::MatrixXd o = z.unaryExpr([](double v) { return sigmoid(v); });

                Dataset rows = take_rows(data, batch);
                const auto trace = forward(client_model, o);
                loss_sum += compute_loss(client_model, trace.post.back(), rows.labels) * b;
                acc_sum += accuracy(trace.post.back(), rows.labels) * b;
                samples += b;

                const auto grads = backward(client_model, trace, rows.labels);
                // dJ/dZ at the boundary: the client-segment input gradient
                // through the boundary activation's derivative.
                const Eigen::MatrixXd sig_prime =
                    o.cwiseProduct(Eigen::MatrixXd::Ones(o.rows(), o.cols()) - o);
                const Eigen::MatrixXd delta_z = grads.boundary_delta.cwiseProduct(sig_prime);
                sgd_update(client_model, grads);

                if (config.literal_client_gradient) {
                    send_literal_gradient(batch, delta_z, m);
                } else {
                    // Pre-scaled by the learning rate so the server spends no
                    // level on it.
                    const auto cts = dense_pack(config.learning_rate * delta_z);
                    m.grad_ciphertexts += static_cast<long>(cts.size());
                    std::vector<std::vector<uint8_t>> blobs;
                    for (const auto& ct : cts) blobs.push_back(backend->serialize(ct));
                    json h;
                    h["literal"] = false;
                    channel->send(MsgType::BOUNDARY_GRAD, wire::payload_with_header(h, blobs));
                }
                ++batches_done;
            }

            // Trailing refresh rounds before the epoch closes.
            Frame f = channel->recv_any();
            while (f.type == MsgType::REFRESH_REQ) {
                serve_refresh(f);
                f = channel->recv_any();
            }
            if (f.type != MsgType::EPOCH_DONE) throw ProtocolError("expected EPOCH_DONE");
            auto [sh, sblobs] = wire::split_payload(f.payload);
            m.matmat_rotations = sh.value("matmat_rotations", 0L);
            m.aux_rotations = sh.value("aux_rotations", 0L);
            m.refreshes = sh.value("refreshes", 0);
            m.loss = loss_sum / static_cast<double>(samples);
            m.train_accuracy = acc_sum / static_cast<double>(samples);
            m.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            m.bytes_sent = channel->bytes_sent();
            m.bytes_received = channel->bytes_received();
            json done;
            done["loss"] = m.loss;
            done["train_accuracy"] = m.train_accuracy;
            channel->send(MsgType::EPOCH_DONE, wire::payload_with_header(done, {}));
            out.epochs.push_back(m);
        }

        finish(out);
        return out;
    }

    void send_literal_gradient(const std::vector<int>& batch, const Eigen::MatrixXd& delta_z,
                               EpochMetrics& m) {
        // Algorithm-2-literal reading: the client forms the whole boundary
        // weight gradient itself (plaintext samples only) and encrypts it in
        // the server's column layout.
        if (config.encrypt_data) {
            throw ProtocolError("literal client gradient requires plaintext samples");
        }
        const int slots = static_cast<int>(backend->slot_count());
        Eigen::MatrixXd X(batch.size(), data.features.cols() + 1);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            X.row(static_cast<Eigen::Index>(i)) << data.features.row(batch[i]), 1.0;
        }
        const Eigen::MatrixXd G =
            config.learning_rate * (delta_z.transpose() * X);  // out x (in+1)
        std::vector<std::vector<uint8_t>> blobs;
        for (int k = 0; k < G.cols(); ++k) {
            Eigen::VectorXd image = Eigen::VectorXd::Zero(slots);
            for (int s = 0; s < pack.samples_per_ct; ++s) {
                image.segment(s * pack.block_len, G.rows()) = G.col(k);
            }
            blobs.push_back(backend->serialize(backend->encrypt(image)));
        }
        m.grad_ciphertexts += static_cast<long>(blobs.size());
        json h;
        h["literal"] = true;
        channel->send(MsgType::BOUNDARY_GRAD, wire::payload_with_header(h, blobs));
    }

    void finish(TrainOutcome& out) {
        const Frame fin = channel->recv(MsgType::SHUTDOWN);
        auto [h, blobs] = wire::split_payload(fin.payload);
        std::vector<CipherValue> cts;
        cts.reserve(blobs.size());
        for (const auto& b : blobs) cts.push_back(backend->parse(b));

        // Boundary layer: per-column replicated ciphertexts, bias last.
        const int rows = h.at("boundary_rows").get<int>();
        const int cols = h.at("boundary_cols").get<int>();
        Eigen::MatrixXd Wb(rows, cols);
        for (int k = 0; k < cols; ++k) {
            Wb.col(k) = decryptor->decrypt(cts.at(k)).head(rows);
        }
        out.server_weights_with_bias.assign(1, Wb);

        // Deeper layers from their backward packing plus bias row.
        const int deep = h.at("deep_layers").get<int>();
        std::size_t pos = cols;
        std::vector<Eigen::MatrixXd> deep_weights;
        for (int l = 0; l < deep; ++l) {
            const int bcount = h.at("bwd_count_" + std::to_string(l)).get<int>();
            const int block = h.at("bwd_block_" + std::to_string(l)).get<int>();
            const int wcols = h.at("bwd_cols_" + std::to_string(l)).get<int>();
            const int cpc = h.at("bwd_cols_per_ct_" + std::to_string(l)).get<int>();
            const int wrows = h.at("bwd_rows_" + std::to_string(l)).get<int>();
            Eigen::MatrixXd W(wrows, wcols + 1);
            for (int t = 0; t < wcols; ++t) {
                const Eigen::VectorXd v = decryptor->decrypt(cts.at(pos + t / cpc));
                W.col(t) = v.segment((t % cpc) * block, wrows);
            }
            pos += bcount;
            const int fcount = h.at("fwd_count_" + std::to_string(l)).get<int>();
            const int fblock = h.at("fwd_block_" + std::to_string(l)).get<int>();
            const int fcpc = h.at("fwd_cols_per_ct_" + std::to_string(l)).get<int>();
            const int frows = h.at("fwd_rows_" + std::to_string(l)).get<int>();
            for (int j = 0; j < wrows; ++j) {
                const Eigen::VectorXd v = decryptor->decrypt(cts.at(pos + j / fcpc));
                W(j, wcols) = v[(j % fcpc) * fblock + (frows - 1)];  // bias row entry
            }
            pos += fcount;
            deep_weights.push_back(std::move(W));
        }
        // Order: layer 1 .. n, boundary last.
        std::vector<Eigen::MatrixXd> ordered = std::move(deep_weights);
        ordered.push_back(out.server_weights_with_bias[0]);
        out.server_weights_with_bias = std::move(ordered);

        out.client_weights = client_model.weights;
        out.client_biases = client_model.biases;

        // Final training accuracy of the full reconstructed model.
        ModelState full = init_model(protocol_layers(config), config.learning_rate,
                                     config.loss_kind(), config.seed);
        for (std::size_t l = 0; l < out.server_weights_with_bias.size(); ++l) {
            const auto& Wb2 = out.server_weights_with_bias[l];
            full.weights[l] = Wb2.leftCols(Wb2.cols() - 1);
            full.biases[l] = Wb2.col(Wb2.cols() - 1);
        }
        const std::size_t off = out.server_weights_with_bias.size();
        for (std::size_t l = 0; l < client_model.weights.size(); ++l) {
            full.weights[off + l] = client_model.weights[l];
            full.biases[off + l] = client_model.biases[l];
        }
        Dataset train = take_rows(data, data.train_indices);
        out.final_accuracy = accuracy(forward(full, train.features).post.back(), train.labels);

        channel->send(MsgType::SHUTDOWN);
    }
};

ClientSession::ClientSession(const SplitModelConfig& config, Dataset dataset,
                             Transport& transport)
    : st_(std::make_unique<State>(config, std::move(dataset), transport)) {}

ClientSession::~ClientSession() = default;

TrainOutcome ClientSession::run() { return st_->run(); }

}  // namespace hesplit
