#ifndef HESPLIT_DATA_HPP
#define HESPLIT_DATA_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace hesplit {

// Loaded dataset: features normalized into [0,1], labels one-hot.
struct Dataset {
    Eigen::MatrixXd features;  // samples x input dim
    Eigen::MatrixXd labels;    // samples x classes, rows sum to 1
    std::vector<int> train_indices;
    std::vector<int> test_indices;
    std::string provenance;
    int dropped_rows = 0;  // rows removed for missing values

    Eigen::Index samples() const { return features.rows(); }
    Eigen::Index feature_dim() const { return features.cols(); }
    Eigen::Index classes() const { return labels.cols(); }
};

// IDX image/label pair (big-endian dims, magics 0x00000803/0x00000801).
// Pixels scale by 1/255; labels one-hot of width 10.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

struct CsvSchema {
    int label_column = -1;             // required
    std::vector<int> skip_columns;     // e.g. id columns
    bool has_header = false;
    char missing_marker = '?';         // rows containing it are dropped
    int label_classes = 0;             // 0 = infer from distinct values
};

// Numeric CSV with min-max normalization per feature; constant columns
// normalize to zero. Rows with missing values are dropped and counted.
Dataset load_csv(const std::string& path, const CsvSchema& schema);

// Seeded Gaussian class blobs: class c is centered on a deterministic
// unit-ish direction scaled by `separation`, stddev 1, then features are
// min-max normalized.
Dataset synth(int samples, int features, int classes, uint64_t seed, double separation = 4.0);

// Deterministic train/test split by shuffled indices.
void split_train_test(Dataset& ds, double train_fraction, uint64_t seed);

Dataset take_rows(const Dataset& ds, const std::vector<int>& rows);

}  // namespace hesplit

#endif
