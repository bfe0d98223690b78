#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dulo/matrix.hpp"
#include "dulo/rng.hpp"

namespace dulo::data {

// Feature matrix plus optional labels. Uncorrupted features are scaled
// to [0,1]; noise injection may push them outside that range on purpose
// (the corruption sigma stays measurable that way).
//
// Pool datasets carry labels with `labels_hidden = true`: they simulate
// the labeling oracle and must not be read by selection code. labels()
// enforces that; oracle_labels() is the explicit escape hatch for the
// evaluation harness.
class Dataset {
  public:
    Dataset() = default;
    Dataset(Matrix features, std::vector<int> labels, int class_count, std::string provenance);
    static Dataset unlabeled(Matrix features, std::string provenance);

    std::size_t size() const { return features_.rows; }
    std::size_t dim() const { return features_.cols; }
    int class_count() const { return class_count_; }
    const std::string& provenance() const { return provenance_; }

    const Matrix& features() const { return features_; }
    bool has_labels() const { return !labels_.empty(); }
    bool labels_hidden() const { return labels_hidden_; }

    // Throws DataError when the labels are hidden (pool discipline).
    const std::vector<int>& labels() const;
    // Harness-only access to hidden labels.
    const std::vector<int>& oracle_labels() const;

    void hide_labels() { labels_hidden_ = true; }

    // Per-point noise record written by inject_noise; 0.0 means clean.
    // Empty when no corruption was applied.
    const std::vector<double>& corruption_sigma() const { return corruption_sigma_; }
    void set_corruption_sigma(std::vector<double> sigma);

    // Rows `indices` of this dataset, labels and corruption records carried
    // along, hidden flag preserved.
    Dataset subset(const std::vector<int>& indices, const std::string& provenance) const;

    // Copy with the feature matrix replaced (same shape); labels, hidden
    // flag and class count carry over. Used by the corruption operations.
    Dataset with_features(Matrix features, const std::string& provenance) const;

    // Class histogram of length class_count (oracle labels allowed: the
    // caller decides whether it may look).
    std::vector<int> histogram_from(const std::vector<int>& labels) const;

  private:
    Matrix features_;
    std::vector<int> labels_;
    int class_count_ = 0;
    bool labels_hidden_ = false;
    std::string provenance_;
    std::vector<double> corruption_sigma_;
};

struct SplitSpec {
    std::size_t train_size = 0;  // |L_tr|
    std::size_t val_size = 0;    // |L_val|
    std::size_t pool_size = 0;   // |U|
    double ratio = 0.0;          // train fraction of the labeled part, 0 = sizes are the driver
    std::uint64_t seed = 0;

    // Derive train/val sizes from a labeled total and ratio r.
    static SplitSpec from_ratio(std::size_t labeled_total, double r, std::size_t pool,
                                std::uint64_t seed);
};

struct Splits {
    Dataset train;  // L_tr
    Dataset val;    // L_val
    Dataset pool;   // U, labels hidden
};

struct NoiseLevel {
    double fraction = 0.0;  // of the dataset
    double sigma = 0.0;
};

struct CorruptionSpec {
    enum class Kind { gaussian_noise, class_imbalance };
    Kind kind = Kind::gaussian_noise;
    std::vector<NoiseLevel> noise;      // gaussian_noise: disjoint fractions
    std::vector<double> proportions;    // class_imbalance: per-class, sums to 1
    std::size_t target_size = 0;        // class_imbalance resample size
    std::uint64_t seed = 0;
};

// IDX (MNIST-style) ingestion: big-endian, magic 0x00000803 for images and
// 0x00000801 for labels; pixels scaled by 1/255.
Dataset load_idx(const std::string& image_path, const std::string& label_path);

// CSV ingestion; label column selected by name (needs a header) or by
// index, -1 for unlabeled data. Features are min-max scaled to [0,1].
struct CsvOptions {
    bool has_header = false;
    std::string label_column_name;  // wins over label_column when non-empty
    int label_column = 0;
};
Dataset load_csv(const std::string& path, const CsvOptions& options);

// Isotropic Gaussian blobs around K centers at pairwise distance
// >= separation, then min-max scaled to [0,1]. Balanced classes up to
// remainder.
Dataset make_blobs(std::size_t n, std::size_t d, int class_count, double separation,
                   std::uint64_t seed);

// Disjoint shuffled index splits; pool labels retained but hidden.
Splits split(const Dataset& dataset, const SplitSpec& spec);

// Additive N(0, sigma^2) per feature on disjoint random subsets of the
// stated fractions. Values are not re-clipped to [0,1].
Dataset inject_noise(const Dataset& dataset, const CorruptionSpec& spec);

// Resample to `target_size` rows whose class histogram matches
// `proportions` up to largest-remainder rounding.
Dataset inject_imbalance(const Dataset& dataset, const std::vector<double>& proportions,
                         std::size_t target_size, std::uint64_t seed);

// Largest-remainder apportionment of `total` into integer counts
// proportional to `weights`. Shared by the subset sampler and
// inject_imbalance.
std::vector<std::size_t> largest_remainder_counts(const std::vector<double>& weights,
                                                  std::size_t total);

}  // namespace dulo::data
