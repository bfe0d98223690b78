#include "dulo/proxy.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include "dulo/errors.hpp"

namespace dulo::proxy {

nn::DenseNet make_classifier(const ProxySpec& spec, std::size_t input_dim, int class_count,
                             Rng& rng) {
    if (spec.epochs < 1) throw ConfigError("proxy/make_classifier: epochs must be >= 1");
    const std::vector<std::size_t> hidden =
        spec.arch == Arch::logistic_regression ? std::vector<std::size_t>{} : spec.hidden;
    for (std::size_t h : hidden) {
        if (h == 0) throw ConfigError("proxy/make_classifier: zero hidden width");
    }
    return nn::make_net(input_dim, hidden, static_cast<std::size_t>(class_count), rng);
}

nn::DenseNet train_classifier(const ProxySpec& spec, const data::Dataset& train_set,
                              std::uint64_t seed) {
    Rng rng(seed);
    nn::DenseNet net = make_classifier(spec, train_set.dim(), train_set.class_count(), rng);
    nn::TrainConfig config;
    config.epochs = spec.epochs;
    config.batch_size = spec.batch_size;
    config.optimizer.kind = spec.optimizer;
    config.optimizer.learning_rate = spec.learning_rate;
    config.loss.kind = nn::LossKind::softmax_cross_entropy;
    return nn::train(std::move(net), train_set.features(),
                     std::span<const int>(train_set.labels()), config, rng)
        .net;
}

double score(const nn::DenseNet& net, const data::Dataset& dataset, const MetricSpec& metric) {
    if (!dataset.has_labels() || dataset.labels_hidden()) {
        throw DataError("proxy/score: dataset '" + dataset.provenance() +
                        "' has no readable labels");
    }
    if (net.output_dim() != static_cast<std::size_t>(dataset.class_count())) {
        throw DataError("proxy/score: net output_dim " + std::to_string(net.output_dim()) +
                        " != class count " + std::to_string(dataset.class_count()));
    }
    const int k = metric.kind == MetricSpec::Kind::top1_accuracy ? 1 : metric.k;
    if (k < 1 || k > dataset.class_count()) {
        throw ConfigError("proxy/score: k must be in [1, K]");
    }

    const Matrix logits = nn::forward(net, dataset.features());
    const std::vector<int>& labels = dataset.labels();
    std::size_t hits = 0;
    std::vector<std::size_t> order(logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const auto row = logits.row(i);
        std::iota(order.begin(), order.end(), 0);
        // stable: equal logits keep the lower class index first
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
        for (int j = 0; j < k; ++j) {
            if (order[static_cast<std::size_t>(j)] == static_cast<std::size_t>(labels[i])) {
                hits += 1;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

double train_and_score(const std::vector<int>& subset_indices, const data::Dataset& train_set,
                       const data::Dataset& val_set, const ProxySpec& spec,
                       const MetricSpec& metric, std::uint64_t seed) {
    if (subset_indices.empty()) {
        throw DataError("proxy/train_and_score: empty subset");
    }
    std::unordered_set<int> seen;
    for (int idx : subset_indices) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= train_set.size()) {
            throw DataError("proxy/train_and_score: index " + std::to_string(idx) +
                            " outside L_tr of size " + std::to_string(train_set.size()));
        }
        if (!seen.insert(idx).second) {
            throw DataError("proxy/train_and_score: duplicate index " + std::to_string(idx));
        }
    }

    const std::uint64_t effective_seed =
        spec.seed_policy == SeedPolicy::per_subset
            ? hash_indices(seed, std::span<const int>(subset_indices))
            : seed;
    const data::Dataset subset = train_set.subset(subset_indices, "subset");
    const nn::DenseNet net = train_classifier(spec, subset, effective_seed);
    return score(net, val_set, metric);
}

}  // namespace dulo::proxy
