#include "hesplit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "hesplit/util/errors.hpp"
#include "hesplit/util/rng.hpp"

namespace hesplit {

namespace {

uint32_t read_u32_be(std::istream& f, const std::string& what) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw ParseError("idx: truncated while reading " + what + " at byte " +
                             std::to_string(static_cast<long>(f.tellg())));
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | b[3];
}

void normalize_min_max(Eigen::MatrixXd& features) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
        const double lo = features.col(j).minCoeff();
        const double hi = features.col(j).maxCoeff();
        if (hi - lo < 1e-300) {
            features.col(j).setZero();  // constant feature: normalized to 0
        } else {
            features.col(j) = (features.col(j).array() - lo) / (hi - lo);
        }
    }
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi) throw ParseError("idx: cannot open " + images_path);
    if (read_u32_be(fi, "image magic") != 0x00000803) {
        throw ParseError("idx: bad image magic in " + images_path);
    }
    const uint32_t count = read_u32_be(fi, "image count");
    const uint32_t rows = read_u32_be(fi, "image rows");
    const uint32_t cols = read_u32_be(fi, "image cols");
    const std::size_t dim = std::size_t{rows} * cols;
    std::vector<unsigned char> pixels(std::size_t{count} * dim);
    fi.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!fi) {
        throw ParseError("idx: image payload truncated at byte " +
                         std::to_string(static_cast<long>(fi.tellg())));
    }

    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw ParseError("idx: cannot open " + labels_path);
    if (read_u32_be(fl, "label magic") != 0x00000801) {
        throw ParseError("idx: bad label magic in " + labels_path);
    }
    const uint32_t lcount = read_u32_be(fl, "label count");
    if (lcount != count) throw ParseError("idx: image/label count mismatch");
    std::vector<unsigned char> labels(count);
    fl.read(reinterpret_cast<char*>(labels.data()), count);
    if (!fl) throw ParseError("idx: label payload truncated");

    Dataset ds;
    ds.provenance = images_path;
    ds.features.resize(count, static_cast<Eigen::Index>(dim));
    ds.labels = Eigen::MatrixXd::Zero(count, 10);
    for (uint32_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            ds.features(i, static_cast<Eigen::Index>(j)) = pixels[i * dim + j] / 255.0;
        }
        if (labels[i] > 9) throw ParseError("idx: label out of range");
        ds.labels(i, labels[i]) = 1.0;
    }
    ds.train_indices.resize(count);
    std::iota(ds.train_indices.begin(), ds.train_indices.end(), 0);
    return ds;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream f(path);
    if (!f) throw ParseError("csv: cannot open " + path);
    if (schema.label_column < 0) throw ParamError("csv: schema needs a label column");

    std::vector<std::vector<double>> feature_rows;
    std::vector<std::string> label_cells;
    int dropped = 0;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1 && schema.has_header) continue;

        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (static_cast<int>(cells.size()) <= schema.label_column) {
            throw ParseError("csv: row " + std::to_string(lineno) + " too short");
        }
        bool missing = false;
        for (const auto& c : cells) {
            if (c.size() == 1 && c[0] == schema.missing_marker) missing = true;
        }
        if (missing) {
            ++dropped;
            continue;
        }
        std::vector<double> row;
        for (int j = 0; j < static_cast<int>(cells.size()); ++j) {
            if (j == schema.label_column) continue;
            if (std::find(schema.skip_columns.begin(), schema.skip_columns.end(), j) !=
                schema.skip_columns.end()) {
                continue;
            }
            try {
                std::size_t used = 0;
                const double v = std::stod(cells[j], &used);
                if (used != cells[j].size() || !std::isfinite(v)) throw std::invalid_argument("");
                row.push_back(v);
            } catch (const std::exception&) {
                throw ParseError("csv: non-numeric cell '" + cells[j] + "' at row " +
                                 std::to_string(lineno) + " column " + std::to_string(j));
            }
        }
        feature_rows.push_back(std::move(row));
        label_cells.push_back(cells[schema.label_column]);
    }
    if (feature_rows.empty()) throw ParseError("csv: no data rows in " + path);

    std::map<std::string, int> class_ids;
    for (const auto& c : label_cells) class_ids.emplace(c, 0);
    int next = 0;
    for (auto& [k, v] : class_ids) v = next++;
    const int classes = schema.label_classes > 0 ? schema.label_classes : next;
    if (next > classes) throw ParseError("csv: more label values than declared classes");

    Dataset ds;
    ds.provenance = path;
    ds.dropped_rows = dropped;
    const Eigen::Index n = static_cast<Eigen::Index>(feature_rows.size());
    const Eigen::Index d = static_cast<Eigen::Index>(feature_rows[0].size());
    ds.features.resize(n, d);
    ds.labels = Eigen::MatrixXd::Zero(n, classes);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(feature_rows[i].size()) != d) {
            throw ParseError("csv: ragged row " + std::to_string(i));
        }
        for (Eigen::Index j = 0; j < d; ++j) ds.features(i, j) = feature_rows[i][j];
        ds.labels(i, class_ids.at(label_cells[i])) = 1.0;
    }
    normalize_min_max(ds.features);
    ds.train_indices.resize(n);
    std::iota(ds.train_indices.begin(), ds.train_indices.end(), 0);
    return ds;
}

Dataset synth(int samples, int features, int classes, uint64_t seed, double separation) {
    if (classes > samples) throw ParamError("synth: more classes than samples");
    if (samples < 1 || features < 1 || classes < 1) throw ParamError("synth: bad sizes");
    Rng rng(seed);

    // Deterministic class centers: random directions scaled to `separation`
    // in the first min(features, 16) coordinates.
    const int active = std::min(features, 16);
    Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(classes, features);
    for (int c = 0; c < classes; ++c) {
        double norm2 = 0;
        for (int j = 0; j < active; ++j) {
            centers(c, j) = rng.gaussian();
            norm2 += centers(c, j) * centers(c, j);
        }
        centers.row(c).head(active) *= separation / std::sqrt(norm2 + 1e-12);
    }

    Dataset ds;
    ds.provenance = "synth(seed=" + std::to_string(seed) + ")";
    ds.features.resize(samples, features);
    ds.labels = Eigen::MatrixXd::Zero(samples, classes);
    for (int i = 0; i < samples; ++i) {
        const int c = i % classes;
        for (int j = 0; j < features; ++j) {
            ds.features(i, j) = centers(c, j) + rng.gaussian();
        }
        ds.labels(i, c) = 1.0;
    }
    normalize_min_max(ds.features);
    ds.train_indices.resize(samples);
    std::iota(ds.train_indices.begin(), ds.train_indices.end(), 0);
    return ds;
}

void split_train_test(Dataset& ds, double train_fraction, uint64_t seed) {
    const int n = static_cast<int>(ds.samples());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
        std::swap(idx[i], idx[rng.uniform_below(static_cast<uint64_t>(i + 1))]);
    }
    const int train = static_cast<int>(std::lround(train_fraction * n));
    ds.train_indices.assign(idx.begin(), idx.begin() + train);
    ds.test_indices.assign(idx.begin() + train, idx.end());
}

Dataset take_rows(const Dataset& ds, const std::vector<int>& rows) {
    Dataset out;
    out.provenance = ds.provenance;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), ds.features.cols());
    out.labels.resize(static_cast<Eigen::Index>(rows.size()), ds.labels.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(rows[i]);
        out.labels.row(static_cast<Eigen::Index>(i)) = ds.labels.row(rows[i]);
    }
    out.train_indices.resize(rows.size());
    std::iota(out.train_indices.begin(), out.train_indices.end(), 0);
    return out;
}

}  // namespace hesplit
