#ifndef HESPLIT_PACKING_HPP
#define HESPLIT_PACKING_HPP

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "hesplit/backend.hpp"

namespace hesplit {

enum class PackingScheme { one_level_batch, one_level_scalar, rotsum_matrix };

// Smallest power of two strictly greater than v. Applied to every padded
// dimension, including values that are already powers of two (4 -> 8); this
// doubles some shapes but is what the rotation-count formula assumes.
int strict_next_pow2(int v);

// Pure slot arithmetic of a packing, independent of any backend. block_len is
// the in-ciphertext padded column length; columns longer than the slot count
// are segmented into whole-ciphertext blocks instead (segments > 1), which
// requires a cross-segment summation after the rotate-and-add.
struct PackLayout {
    int rows = 0, cols = 0;
    int block_len = 0;
    int padded_col_len = 0;   // |l̄|, or segments*slots for segmented columns
    int cols_per_ct = 0;
    int ct_count = 0;
    int division_step = 0;    // slots / block_len
    int segments = 1;
    int packed_col_count = 0; // cols, or strict pow2 when the count is padded
};

PackLayout batch_layout(int rows, int cols, int slots);
PackLayout scalar_layout(int rows, int cols, int slots);
PackLayout rotsum_layout(int rows, int cols, int slots, bool pad_column_count);

// Slot images, one vector (length slots) per ciphertext: zero-padded columns
// concatenated block by block.
std::vector<Eigen::VectorXd> column_slot_vectors(const Eigen::MatrixXd& W,
                                                 const PackLayout& layout, int slots);

struct PackedWeights {
    PackingScheme scheme = PackingScheme::one_level_batch;
    PackLayout layout;
    std::vector<CipherValue> ciphertexts;
};

PackedWeights pack_matrix_batch(const Eigen::MatrixXd& W, const Backend& backend);
PackedWeights pack_matrix_scalar(const Eigen::MatrixXd& W, const Backend& backend);
PackedWeights pack_columns_rotsum(const Eigen::MatrixXd& B, const Backend& backend,
                                  bool pad_column_count = false);

// One-level matrix-vector product. Both schemes consume exactly one level and
// return a single ciphertext; under the batch scheme with cols_per_ct > 1 the
// decrypted slots are partial sums the client folds with client_fold.
std::vector<CipherValue> matvec_one_level(const PackedWeights& pw, const Eigen::VectorXd& x,
                                          const Backend& backend);

// Sums cols_per_ct sub-blocks of padded_col_len entries and truncates to rows.
Eigen::VectorXd client_fold(const Eigen::VectorXd& decrypted_blocks, int cols_per_ct,
                            int padded_col_len, int rows);

// Result of a rotate-and-sum product: dot products sit in the marked slots,
// everything else is arithmetic garbage. Marks are metadata, never stored in
// slots; mark_positions is row-major over (row of A, column of B).
struct MarkedResult {
    std::vector<CipherValue> ciphertexts;
    std::vector<std::pair<int, int>> mark_positions;  // (ciphertext index, slot index)
    int rows = 0, cols = 0;
    long rotations_used = 0;
};

// A plaintext rows x B packed columns.
MarkedResult matmat_rotsum(const Eigen::MatrixXd& A, const PackedWeights& B,
                           const Backend& backend);
// Encrypted-rows variant: one ciphertext per A row carrying the slot image
// from replicate_row_for_rotsum.
MarkedResult matmat_rotsum(const std::vector<CipherValue>& A_rows, const PackedWeights& B,
                           const Backend& backend);

// Slot image an encrypted A row must carry: the row, padded to block_len,
// replicated across every block of the ciphertext (per segment when the
// columns are segmented).
Eigen::VectorXd replicate_row_for_rotsum(const Eigen::VectorXd& row, const PackLayout& layout,
                                         int slots, int segment);

// Reads the marked slots out of the decrypted result vectors.
Eigen::MatrixXd extract_marked(const std::vector<Eigen::VectorXd>& decrypted,
                               const MarkedResult& result);

// Packing-method chooser: scalar wins when slots/|l2| is strictly below the
// threshold (default 2.7), batch otherwise.
PackingScheme choose_packing(int second_layer_size, const ckks::CryptoParams& params,
                             double threshold = 2.7);

// Rotation-count formula over consecutive layer pairs, per sample per pass:
// sum_i (|l̄_i|*|l̄_{i+1}|/(N/2)) * log2(|l̄_{i+1}|). Evaluated exactly as
// written (may be fractional below one ciphertext); the ceil variant reports
// whole-ciphertext counts.
double count_rotations_formula(const std::vector<int>& layer_sizes,
                               const ckks::CryptoParams& params);
double count_rotations_ceil(const std::vector<int>& layer_sizes,
                            const ckks::CryptoParams& params);

}  // namespace hesplit

#endif
