#include "hesplit/packing.hpp"

#include <cmath>

#include "hesplit/util/errors.hpp"
#include "hesplit/util/parallel.hpp"

namespace hesplit {

int strict_next_pow2(int v) {
    if (v < 0) throw DimensionError("strict_next_pow2: negative input");
    int p = 1;
    while (p <= v) p <<= 1;
    return p;
}

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

int ilog2(int v) {
    int l = 0;
    while ((1 << l) < v) ++l;
    return l;
}

PackLayout make_layout(int rows, int cols, int slots, int cols_per_ct_cap,
                       bool pad_column_count) {
    if (rows < 1 || cols < 1) throw DimensionError("packing: empty matrix");
    PackLayout lay;
    lay.rows = rows;
    lay.cols = cols;
    lay.packed_col_count = pad_column_count ? strict_next_pow2(cols) : cols;
    if (rows < slots) {
        lay.block_len = strict_next_pow2(rows);
        lay.segments = 1;
        if (lay.block_len > slots) {
            // Doubling a power-of-two row count can spill past the slot
            // budget; fall back to whole-ciphertext segments.
            lay.segments = ceil_div(lay.block_len, slots);
            lay.block_len = slots;
        }
    } else {
        lay.segments = ceil_div(rows, slots);
        lay.block_len = slots;
    }
    lay.padded_col_len = lay.block_len * lay.segments;
    lay.cols_per_ct = lay.segments > 1 ? 1 : std::min(slots / lay.block_len, cols_per_ct_cap);
    lay.division_step = slots / lay.block_len;
    lay.ct_count = lay.segments > 1 ? lay.packed_col_count * lay.segments
                                    : ceil_div(lay.packed_col_count, lay.cols_per_ct);
    return lay;
}

}  // namespace

PackLayout batch_layout(int rows, int cols, int slots) {
    PackLayout lay = make_layout(rows, cols, slots, slots, false);
    if (lay.segments > 1) {
        throw DimensionError("batch packing: column exceeds slot count, use the rotsum scheme");
    }
    return lay;
}

PackLayout scalar_layout(int rows, int cols, int slots) {
    PackLayout lay = make_layout(rows, cols, slots, 1, false);
    if (lay.segments > 1) {
        throw DimensionError("scalar packing: column exceeds slot count, use the rotsum scheme");
    }
    return lay;
}

PackLayout rotsum_layout(int rows, int cols, int slots, bool pad_column_count) {
    return make_layout(rows, cols, slots, slots, pad_column_count);
}

std::vector<Eigen::VectorXd> column_slot_vectors(const Eigen::MatrixXd& W,
                                                 const PackLayout& lay, int slots) {
    if (W.rows() != lay.rows || W.cols() != lay.cols) {
        throw DimensionError("column_slot_vectors: matrix/layout mismatch");
    }
    std::vector<Eigen::VectorXd> out(lay.ct_count, Eigen::VectorXd::Zero(slots));
    if (lay.segments == 1) {
        for (int j = 0; j < lay.packed_col_count; ++j) {
            if (j >= lay.cols) break;  // padded column slots stay zero
            const int ct = j / lay.cols_per_ct;
            const int offset = (j % lay.cols_per_ct) * lay.block_len;
            out[ct].segment(offset, lay.rows) = W.col(j);
        }
    } else {
        for (int j = 0; j < lay.cols; ++j) {
            for (int s = 0; s < lay.segments; ++s) {
                const int ct = j * lay.segments + s;
                const int lo = s * lay.block_len;
                const int len = std::min(lay.block_len, lay.rows - lo);
                if (len > 0) out[ct].head(len) = W.col(j).segment(lo, len);
            }
        }
    }
    return out;
}

namespace {

PackedWeights pack_with_layout(const Eigen::MatrixXd& W, const PackLayout& lay,
                               PackingScheme scheme, const Backend& backend) {
    const auto vectors = column_slot_vectors(W, lay, static_cast<int>(backend.slot_count()));
    PackedWeights pw;
    pw.scheme = scheme;
    pw.layout = lay;
    pw.ciphertexts.resize(vectors.size());
    parallel_for(vectors.size(), [&](std::size_t i) {
        pw.ciphertexts[i] = backend.encrypt(vectors[i]);
    });
    return pw;
}

}  // namespace

PackedWeights pack_matrix_batch(const Eigen::MatrixXd& W, const Backend& backend) {
    const auto lay = batch_layout(static_cast<int>(W.rows()), static_cast<int>(W.cols()),
                                  static_cast<int>(backend.slot_count()));
    return pack_with_layout(W, lay, PackingScheme::one_level_batch, backend);
}

PackedWeights pack_matrix_scalar(const Eigen::MatrixXd& W, const Backend& backend) {
    const auto lay = scalar_layout(static_cast<int>(W.rows()), static_cast<int>(W.cols()),
                                   static_cast<int>(backend.slot_count()));
    return pack_with_layout(W, lay, PackingScheme::one_level_scalar, backend);
}

PackedWeights pack_columns_rotsum(const Eigen::MatrixXd& B, const Backend& backend,
                                  bool pad_column_count) {
    const auto lay = rotsum_layout(static_cast<int>(B.rows()), static_cast<int>(B.cols()),
                                   static_cast<int>(backend.slot_count()), pad_column_count);
    return pack_with_layout(B, lay, PackingScheme::rotsum_matrix, backend);
}

std::vector<CipherValue> matvec_one_level(const PackedWeights& pw, const Eigen::VectorXd& x,
                                          const Backend& backend) {
    const PackLayout& lay = pw.layout;
    if (x.size() != lay.cols) throw DimensionError("matvec_one_level: vector length != cols");
    const int slots = static_cast<int>(backend.slot_count());

    CipherValue acc;
    bool first = true;
    if (pw.scheme == PackingScheme::one_level_scalar) {
        for (int j = 0; j < lay.cols; ++j) {
            CipherValue term = backend.mul_scalar(pw.ciphertexts[j], x[j]);
            acc = first ? std::move(term) : backend.add(acc, term);
            first = false;
        }
    } else if (pw.scheme == PackingScheme::one_level_batch) {
        for (int ct = 0; ct < lay.ct_count; ++ct) {
            Eigen::VectorXd mask = Eigen::VectorXd::Zero(slots);
            for (int k = 0; k < lay.cols_per_ct; ++k) {
                const int j = ct * lay.cols_per_ct + k;
                if (j >= lay.cols) break;
                mask.segment(k * lay.block_len, lay.block_len).setConstant(x[j]);
            }
            CipherValue term = backend.mul_plain(pw.ciphertexts[ct], mask);
            acc = first ? std::move(term) : backend.add(acc, term);
            first = false;
        }
    } else {
        throw DimensionError("matvec_one_level: packed weights use the rotsum scheme");
    }
    std::vector<CipherValue> out;
    out.push_back(std::move(acc));
    return out;
}

Eigen::VectorXd client_fold(const Eigen::VectorXd& decrypted_blocks, int cols_per_ct,
                            int padded_col_len, int rows) {
    if (decrypted_blocks.size() != static_cast<Eigen::Index>(cols_per_ct) * padded_col_len) {
        throw DimensionError("client_fold: length != cols_per_ct * padded_col_len");
    }
    Eigen::VectorXd folded = Eigen::VectorXd::Zero(padded_col_len);
    for (int b = 0; b < cols_per_ct; ++b) {
        folded += decrypted_blocks.segment(b * padded_col_len, padded_col_len);
    }
    return folded.head(rows);
}

Eigen::VectorXd replicate_row_for_rotsum(const Eigen::VectorXd& row, const PackLayout& lay,
                                         int slots, int segment) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(slots);
    const int lo = segment * lay.block_len;
    const int len = std::min<int>(lay.block_len, static_cast<int>(row.size()) - lo);
    if (len <= 0) return out;
    const int blocks = lay.segments > 1 ? 1 : slots / lay.block_len;
    for (int b = 0; b < blocks; ++b) {
        out.segment(b * lay.block_len, len) = row.segment(lo, len);
    }
    return out;
}

namespace {

// Shared rotate-and-add core. products[ct] must hold the elementwise pairing
// of one A row with the packed columns; afterwards the block-leading slots
// carry the dot products. Returns rotations consumed.
long rotate_accumulate(std::vector<CipherValue>& products, const Backend& backend,
                       int block_len) {
    long rotations = 0;
    const int depth = ilog2(block_len);
    for (auto& ct : products) {
        for (int d = 0; d < depth; ++d) {
            ct = backend.add(ct, backend.rotate(ct, 1 << d));
            ++rotations;
        }
    }
    return rotations;
}

MarkedResult matmat_core(const std::function<CipherValue(int, int)>& row_times_ct, int a_rows,
                         const PackedWeights& B, const Backend& backend) {
    const PackLayout& lay = B.layout;
    MarkedResult res;
    res.rows = a_rows;
    res.cols = lay.cols;
    long rotations = 0;

    for (int i = 0; i < a_rows; ++i) {
        if (lay.segments == 1) {
            std::vector<CipherValue> products(lay.ct_count);
            for (int ct = 0; ct < lay.ct_count; ++ct) products[ct] = row_times_ct(i, ct);
            rotations += rotate_accumulate(products, backend, lay.block_len);
            const int base = static_cast<int>(res.ciphertexts.size());
            for (auto& ct : products) res.ciphertexts.push_back(std::move(ct));
            for (int j = 0; j < lay.cols; ++j) {
                res.mark_positions.emplace_back(base + j / lay.cols_per_ct,
                                                (j % lay.cols_per_ct) * lay.block_len);
            }
        } else {
            // Segmented columns: rotate-add each segment, then sum segments.
            for (int j = 0; j < lay.cols; ++j) {
                std::vector<CipherValue> seg_products(lay.segments);
                for (int s = 0; s < lay.segments; ++s) {
                    seg_products[s] = row_times_ct(i, j * lay.segments + s);
                }
                rotations += rotate_accumulate(seg_products, backend, lay.block_len);
                CipherValue total = std::move(seg_products[0]);
                for (int s = 1; s < lay.segments; ++s) {
                    total = backend.add(total, seg_products[s]);
                }
                res.mark_positions.emplace_back(static_cast<int>(res.ciphertexts.size()), 0);
                res.ciphertexts.push_back(std::move(total));
            }
        }
    }
    res.rotations_used = rotations;
    return res;
}

}  // namespace

MarkedResult matmat_rotsum(const Eigen::MatrixXd& A, const PackedWeights& B,
                           const Backend& backend) {
    if (B.scheme != PackingScheme::rotsum_matrix) {
        throw DimensionError("matmat_rotsum: second operand not rotsum-packed");
    }
    if (A.cols() != B.layout.rows) throw DimensionError("matmat_rotsum: inner dimensions differ");
    const int slots = static_cast<int>(backend.slot_count());
    auto row_times_ct = [&](int i, int ct) {
        const int segment = B.layout.segments > 1 ? ct % B.layout.segments : 0;
        const Eigen::VectorXd mask =
            replicate_row_for_rotsum(A.row(i).transpose(), B.layout, slots, segment);
        return backend.mul_plain(B.ciphertexts[ct], mask);
    };
    return matmat_core(row_times_ct, static_cast<int>(A.rows()), B, backend);
}

MarkedResult matmat_rotsum(const std::vector<CipherValue>& A_rows, const PackedWeights& B,
                           const Backend& backend) {
    if (B.scheme != PackingScheme::rotsum_matrix) {
        throw DimensionError("matmat_rotsum: second operand not rotsum-packed");
    }
    if (B.layout.segments > 1) {
        throw DimensionError("matmat_rotsum: encrypted rows against segmented columns "
                             "not supported; refresh to a compact layout first");
    }
    auto row_times_ct = [&](int i, int ct) {
        const CipherValue& row = A_rows[static_cast<std::size_t>(i)];
        const CipherValue& col = B.ciphertexts[ct];
        const int lvl = std::min(row.level(), col.level());
        const CipherValue r = row.level() == lvl ? row : backend.level_drop(row, lvl);
        const CipherValue c = col.level() == lvl ? col : backend.level_drop(col, lvl);
        return backend.mul_ct(r, c);
    };
    return matmat_core(row_times_ct, static_cast<int>(A_rows.size()), B, backend);
}

Eigen::MatrixXd extract_marked(const std::vector<Eigen::VectorXd>& decrypted,
                               const MarkedResult& result) {
    if (result.mark_positions.size() !=
        static_cast<std::size_t>(result.rows) * static_cast<std::size_t>(result.cols)) {
        throw DimensionError("extract_marked: mark count != rows*cols");
    }
    Eigen::MatrixXd out(result.rows, result.cols);
    std::size_t k = 0;
    for (int i = 0; i < result.rows; ++i) {
        for (int j = 0; j < result.cols; ++j, ++k) {
            const auto [ct, slot] = result.mark_positions[k];
            out(i, j) = decrypted[static_cast<std::size_t>(ct)][slot];
        }
    }
    return out;
}

PackingScheme choose_packing(int second_layer_size, const ckks::CryptoParams& params,
                             double threshold) {
    if (second_layer_size < 1) throw DimensionError("choose_packing: layer size must be >= 1");
    const double ratio =
        static_cast<double>(params.slot_count()) / static_cast<double>(second_layer_size);
    return ratio < threshold ? PackingScheme::one_level_scalar : PackingScheme::one_level_batch;
}

double count_rotations_formula(const std::vector<int>& layer_sizes,
                               const ckks::CryptoParams& params) {
    if (layer_sizes.empty()) throw DimensionError("count_rotations: empty layer list");
    const double slots = static_cast<double>(params.slot_count());
    double total = 0;
    for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
        const double li = strict_next_pow2(layer_sizes[i]);
        const double lj = strict_next_pow2(layer_sizes[i + 1]);
        total += (li * lj / slots) * std::log2(lj);
    }
    return total;
}

double count_rotations_ceil(const std::vector<int>& layer_sizes,
                            const ckks::CryptoParams& params) {
    if (layer_sizes.empty()) throw DimensionError("count_rotations: empty layer list");
    const double slots = static_cast<double>(params.slot_count());
    double total = 0;
    for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
        const double li = strict_next_pow2(layer_sizes[i]);
        const double lj = strict_next_pow2(layer_sizes[i + 1]);
        total += std::ceil(li * lj / slots) * std::log2(lj);
    }
    return total;
}

}  // namespace hesplit
