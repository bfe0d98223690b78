#include "dulo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "dulo/errors.hpp"

namespace dulo::data {

Dataset::Dataset(Matrix features, std::vector<int> labels, int class_count, std::string provenance)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      class_count_(class_count),
      provenance_(std::move(provenance)) {
    if (!labels_.empty() && labels_.size() != features_.rows) {
        throw DataError("data/Dataset: " + std::to_string(labels_.size()) + " labels for " +
                        std::to_string(features_.rows) + " rows");
    }
    for (int y : labels_) {
        if (y < 0 || y >= class_count_) {
            throw DataError("data/Dataset: label " + std::to_string(y) +
                            " outside [0, " + std::to_string(class_count_) + ")");
        }
    }
    for (double v : features_.data) {
        if (!std::isfinite(v)) throw DataError("data/Dataset: non-finite feature value");
    }
}

Dataset Dataset::unlabeled(Matrix features, std::string provenance) {
    Dataset ds;
    ds.features_ = std::move(features);
    ds.provenance_ = std::move(provenance);
    return ds;
}

const std::vector<int>& Dataset::labels() const {
    if (labels_.empty()) {
        throw DataError("data/labels: dataset '" + provenance_ + "' is unlabeled");
    }
    if (labels_hidden_) {
        throw DataError("data/labels: labels of '" + provenance_ +
                        "' are hidden (pool discipline); use oracle_labels() in the harness");
    }
    return labels_;
}

const std::vector<int>& Dataset::oracle_labels() const {
    if (labels_.empty()) {
        throw DataError("data/oracle_labels: dataset '" + provenance_ + "' is unlabeled");
    }
    return labels_;
}

void Dataset::set_corruption_sigma(std::vector<double> sigma) {
    if (sigma.size() != features_.rows) {
        throw DataError("data/set_corruption_sigma: record size mismatch");
    }
    corruption_sigma_ = std::move(sigma);
}

Dataset Dataset::subset(const std::vector<int>& indices, const std::string& provenance) const {
    Matrix f(indices.size(), features_.cols);
    std::vector<int> y;
    y.reserve(labels_.empty() ? 0 : indices.size());
    std::vector<double> sigma;
    sigma.reserve(corruption_sigma_.empty() ? 0 : indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx < 0 || static_cast<std::size_t>(idx) >= features_.rows) {
            throw DataError("data/subset: index " + std::to_string(idx) + " out of bounds");
        }
        std::copy(features_.row(idx).begin(), features_.row(idx).end(), f.row(i).begin());
        if (!labels_.empty()) y.push_back(labels_[idx]);
        if (!corruption_sigma_.empty()) sigma.push_back(corruption_sigma_[idx]);
    }
    Dataset out;
    out.features_ = std::move(f);
    out.labels_ = std::move(y);
    out.class_count_ = class_count_;
    out.labels_hidden_ = labels_hidden_;
    out.provenance_ = provenance;
    out.corruption_sigma_ = std::move(sigma);
    return out;
}

Dataset Dataset::with_features(Matrix features, const std::string& provenance) const {
    if (features.rows != features_.rows || features.cols != features_.cols) {
        throw DataError("data/with_features: shape mismatch");
    }
    Dataset out = *this;
    out.features_ = std::move(features);
    out.provenance_ = provenance;
    return out;
}

std::vector<int> Dataset::histogram_from(const std::vector<int>& labels) const {
    std::vector<int> hist(static_cast<std::size_t>(std::max(class_count_, 1)), 0);
    for (int y : labels) {
        if (y >= 0 && static_cast<std::size_t>(y) < hist.size()) hist[static_cast<std::size_t>(y)] += 1;
    }
    return hist;
}

SplitSpec SplitSpec::from_ratio(std::size_t labeled_total, double r, std::size_t pool,
                                std::uint64_t seed) {
    if (r <= 0.0 || r >= 1.0) {
        throw ConfigError("data/SplitSpec: ratio must be in (0,1), got " + std::to_string(r));
    }
    SplitSpec spec;
    spec.train_size = static_cast<std::size_t>(std::llround(r * static_cast<double>(labeled_total)));
    spec.train_size = std::min(std::max<std::size_t>(spec.train_size, 1), labeled_total - 1);
    spec.val_size = labeled_total - spec.train_size;
    spec.pool_size = pool;
    spec.ratio = r;
    spec.seed = seed;
    return spec;
}

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path, std::size_t offset) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw DataError("data/load_idx: " + path + " truncated at offset " + std::to_string(offset));
    }
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim surrounding whitespace
        std::size_t a = cell.find_first_not_of(" \t\r");
        std::size_t b = cell.find_last_not_of(" \t\r");
        cells.push_back(a == std::string::npos ? std::string() : cell.substr(a, b - a + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

void minmax_scale(Matrix& features) {
    for (std::size_t c = 0; c < features.cols; ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t r = 0; r < features.rows; ++r) {
            lo = std::min(lo, features(r, c));
            hi = std::max(hi, features(r, c));
        }
        const double range = hi - lo;
        for (std::size_t r = 0; r < features.rows; ++r) {
            features(r, c) = range > 0.0 ? (features(r, c) - lo) / range : 0.0;
        }
    }
}

}  // namespace

Dataset load_idx(const std::string& image_path, const std::string& label_path) {
    std::ifstream img(image_path, std::ios::binary);
    if (!img) throw DataError("data/load_idx: cannot open " + image_path);
    const std::uint32_t img_magic = read_be_u32(img, image_path, 0);
    if (img_magic != 0x00000803u) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "0x%08x", img_magic);
        throw DataError("data/load_idx: bad image magic " + std::string(buf) + " at offset 0 in " +
                        image_path + " (expected 0x00000803)");
    }
    const std::uint32_t count = read_be_u32(img, image_path, 4);
    const std::uint32_t rows = read_be_u32(img, image_path, 8);
    const std::uint32_t cols = read_be_u32(img, image_path, 12);
    const std::size_t dim = static_cast<std::size_t>(rows) * cols;

    std::vector<unsigned char> pixels(static_cast<std::size_t>(count) * dim);
    if (!img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
        throw DataError("data/load_idx: " + image_path + " truncated at offset " +
                        std::to_string(16 + img.gcount()));
    }

    std::ifstream lab(label_path, std::ios::binary);
    if (!lab) throw DataError("data/load_idx: cannot open " + label_path);
    const std::uint32_t lab_magic = read_be_u32(lab, label_path, 0);
    if (lab_magic != 0x00000801u) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "0x%08x", lab_magic);
        throw DataError("data/load_idx: bad label magic " + std::string(buf) + " at offset 0 in " +
                        label_path + " (expected 0x00000801)");
    }
    const std::uint32_t lab_count = read_be_u32(lab, label_path, 4);
    if (lab_count != count) {
        throw DataError("data/load_idx: image count " + std::to_string(count) +
                        " != label count " + std::to_string(lab_count));
    }
    std::vector<unsigned char> raw_labels(count);
    if (!lab.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(count))) {
        throw DataError("data/load_idx: " + label_path + " truncated at offset " +
                        std::to_string(8 + lab.gcount()));
    }

    Matrix features(count, dim);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        features.data[i] = static_cast<double>(pixels[i]) / 255.0;
    }
    std::vector<int> labels(raw_labels.begin(), raw_labels.end());
    const int class_count = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    return Dataset(std::move(features), std::move(labels), std::max(class_count, 1),
                   "idx:" + image_path);
}

Dataset load_csv(const std::string& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) throw DataError("data/load_csv: cannot open " + path);

    std::string line;
    std::size_t line_no = 0;
    int label_col = options.label_column;
    std::size_t width = 0;
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t rows = 0;

    if (options.has_header) {
        if (!std::getline(in, line)) throw DataError("data/load_csv: empty file " + path);
        line_no += 1;
        if (!options.label_column_name.empty()) {
            const auto header = split_csv_line(line);
            auto it = std::find(header.begin(), header.end(), options.label_column_name);
            if (it == header.end()) {
                throw DataError("data/load_csv: label column '" + options.label_column_name +
                                "' not in header of " + path);
            }
            label_col = static_cast<int>(it - header.begin());
        }
    } else if (!options.label_column_name.empty()) {
        throw ConfigError("data/load_csv: label column by name requires a header");
    }

    while (std::getline(in, line)) {
        line_no += 1;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        const std::size_t feature_width = cells.size() - (label_col >= 0 ? 1 : 0);
        if (width == 0) {
            width = feature_width;
        } else if (feature_width != width) {
            throw DataError("data/load_csv: line " + std::to_string(line_no) + " of " + path +
                            " has " + std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(width + (label_col >= 0 ? 1 : 0)));
        }
        if (label_col >= static_cast<int>(cells.size())) {
            throw DataError("data/load_csv: label column " + std::to_string(label_col) +
                            " missing on line " + std::to_string(line_no));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            try {
                if (static_cast<int>(c) == label_col) {
                    labels.push_back(std::stoi(cells[c]));
                } else {
                    values.push_back(std::stod(cells[c]));
                }
            } catch (const std::exception&) {
                throw DataError("data/load_csv: cannot parse '" + cells[c] + "' on line " +
                                std::to_string(line_no) + " of " + path);
            }
        }
        rows += 1;
    }
    if (rows == 0) throw DataError("data/load_csv: no data rows in " + path);

    Matrix features(rows, width);
    features.data = std::move(values);
    minmax_scale(features);

    if (label_col < 0) return Dataset::unlabeled(std::move(features), "csv:" + path);
    const int min_label = *std::min_element(labels.begin(), labels.end());
    if (min_label < 0) throw DataError("data/load_csv: negative label in " + path);
    const int class_count = *std::max_element(labels.begin(), labels.end()) + 1;
    return Dataset(std::move(features), std::move(labels), class_count, "csv:" + path);
}

Dataset make_blobs(std::size_t n, std::size_t d, int class_count, double separation,
                   std::uint64_t seed) {
    if (class_count < 1 || n < static_cast<std::size_t>(class_count) || d < 1) {
        throw ConfigError("data/make_blobs: need n >= K >= 1 and d >= 1");
    }
    Rng rng(mix_seed(seed, 0x0b10b5));
    const std::size_t k = static_cast<std::size_t>(class_count);

    // Rejection-sample centers until pairwise separation holds; the box
    // grows if a configuration is infeasible.
    std::vector<std::vector<double>> centers;
    double side = separation * static_cast<double>(k + 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int attempts = 0;
    while (centers.size() < k) {
        std::vector<double> c(d);
        for (double& v : c) v = unit(rng) * side;
        bool ok = true;
        for (const auto& other : centers) {
            double dist2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) dist2 += (c[j] - other[j]) * (c[j] - other[j]);
            if (dist2 < separation * separation) {
                ok = false;
                break;
            }
        }
        if (ok) {
            centers.push_back(std::move(c));
            attempts = 0;
        } else if (++attempts > 1000) {
            side *= 1.5;
            attempts = 0;
        }
    }

    // Balanced class counts up to remainder.
    std::vector<std::size_t> counts(k, n / k);
    for (std::size_t c = 0; c < n % k; ++c) counts[c] += 1;

    Matrix features(n, d);
    std::vector<int> labels(n);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::size_t row = 0;
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < counts[c]; ++i, ++row) {
            labels[row] = static_cast<int>(c);
            for (std::size_t j = 0; j < d; ++j) features(row, j) = centers[c][j] + gauss(rng);
        }
    }

    // Decorrelate row order from class order.
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix shuffled(n, d);
    std::vector<int> shuffled_labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(features.row(perm[i]).begin(), features.row(perm[i]).end(), shuffled.row(i).begin());
        shuffled_labels[i] = labels[static_cast<std::size_t>(perm[i])];
    }
    minmax_scale(shuffled);
    return Dataset(std::move(shuffled), std::move(shuffled_labels), class_count, "blobs");
}

Splits split(const Dataset& dataset, const SplitSpec& spec) {
    const std::size_t need = spec.train_size + spec.val_size + spec.pool_size;
    if (spec.train_size == 0 || spec.val_size == 0 || spec.pool_size == 0) {
        throw ConfigError("data/split: all split sizes must be positive");
    }
    if (need > dataset.size()) {
        throw ConfigError("data/split: sizes " + std::to_string(spec.train_size) + "+" +
                          std::to_string(spec.val_size) + "+" + std::to_string(spec.pool_size) +
                          " exceed dataset size " + std::to_string(dataset.size()));
    }
    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(spec.seed, 0x5b711));
    std::shuffle(order.begin(), order.end(), rng);

    auto take = [&](std::size_t start, std::size_t count, const char* name) {
        std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(start + count));
        return dataset.subset(idx, dataset.provenance() + "/" + name);
    };
    Splits out{take(0, spec.train_size, "train"), take(spec.train_size, spec.val_size, "val"),
               take(spec.train_size + spec.val_size, spec.pool_size, "pool")};
    out.pool.hide_labels();
    return out;
}

Dataset inject_noise(const Dataset& dataset, const CorruptionSpec& spec) {
    if (spec.kind != CorruptionSpec::Kind::gaussian_noise) {
        throw ConfigError("data/inject_noise: spec kind is not gaussian_noise");
    }
    double total = 0.0;
    for (const NoiseLevel& level : spec.noise) {
        if (level.fraction < 0.0 || level.sigma < 0.0) {
            throw ConfigError("data/inject_noise: negative fraction or sigma");
        }
        total += level.fraction;
    }
    if (total > 1.0 + 1e-12) {
        throw ConfigError("data/inject_noise: fractions sum to " + std::to_string(total) + " > 1");
    }

    const std::size_t n = dataset.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(spec.seed, 0x401fe));
    std::shuffle(order.begin(), order.end(), rng);

    // Disjoint segments sized by largest-remainder over {fractions, clean rest}.
    std::vector<double> weights;
    for (const NoiseLevel& level : spec.noise) weights.push_back(level.fraction);
    weights.push_back(std::max(0.0, 1.0 - total));
    const std::vector<std::size_t> counts = largest_remainder_counts(weights, n);

    Matrix features = dataset.features();
    std::vector<double> record = dataset.corruption_sigma();
    if (record.empty()) record.assign(n, 0.0);

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::size_t cursor = 0;
    for (std::size_t s = 0; s < spec.noise.size(); ++s) {
        const double sigma = spec.noise[s].sigma;
        for (std::size_t i = 0; i < counts[s]; ++i, ++cursor) {
            const int row = order[cursor];
            if (sigma > 0.0) {
                for (std::size_t j = 0; j < features.cols; ++j) {
                    features(static_cast<std::size_t>(row), j) += sigma * gauss(rng);
                }
            }
            record[static_cast<std::size_t>(row)] = sigma;
        }
    }

    Dataset out = dataset.with_features(std::move(features), dataset.provenance() + "+noise");
    out.set_corruption_sigma(std::move(record));
    return out;
}

Dataset inject_imbalance(const Dataset& dataset, const std::vector<double>& proportions,
                         std::size_t target_size, std::uint64_t seed) {
    double sum = 0.0;
    for (double p : proportions) {
        if (p < 0.0) throw ConfigError("data/inject_imbalance: negative proportion");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("data/inject_imbalance: proportions sum to " + std::to_string(sum));
    }
    if (proportions.size() != static_cast<std::size_t>(dataset.class_count())) {
        throw ConfigError("data/inject_imbalance: " + std::to_string(proportions.size()) +
                          " proportions for " + std::to_string(dataset.class_count()) + " classes");
    }

    const std::vector<int>& labels = dataset.oracle_labels();
    std::vector<std::vector<int>> by_class(proportions.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
    }

    const std::vector<std::size_t> counts = largest_remainder_counts(proportions, target_size);
    Rng rng(mix_seed(seed, 0x1a5a1));
    std::vector<int> chosen;
    chosen.reserve(target_size);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] > by_class[c].size()) {
            throw ConfigError("data/inject_imbalance: class " + std::to_string(c) + " has " +
                              std::to_string(by_class[c].size()) + " instances, needs " +
                              std::to_string(counts[c]));
        }
        std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
        chosen.insert(chosen.end(), by_class[c].begin(),
                      by_class[c].begin() + static_cast<std::ptrdiff_t>(counts[c]));
    }
    std::shuffle(chosen.begin(), chosen.end(), rng);
    return dataset.subset(chosen, dataset.provenance() + "+imbalance");
}

std::vector<std::size_t> largest_remainder_counts(const std::vector<double>& weights,
                                                  std::size_t total) {
    double sum = 0.0;
    for (double w : weights) sum += w;
    if (sum <= 0.0) throw ConfigError("data/largest_remainder: weights sum to zero");

    std::vector<std::size_t> counts(weights.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;  // (-remainder, index)
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double quota = weights[i] / sum * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(quota));
        assigned += counts[i];
        remainders.emplace_back(-(quota - std::floor(quota)), i);
    }
    std::sort(remainders.begin(), remainders.end());
    for (std::size_t r = 0; assigned < total; ++r) {
        counts[remainders[r % remainders.size()].second] += 1;
        assigned += 1;
    }
    return counts;
}

}  // namespace dulo::data
