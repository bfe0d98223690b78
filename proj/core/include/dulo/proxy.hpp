#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dulo/dataset.hpp"
#include "dulo/nn.hpp"

namespace dulo::proxy {

enum class Arch { logistic_regression, mlp };
enum class SeedPolicy { fixed, per_subset };

// The learning algorithm A: a cheap classifier retrained per subset.
struct ProxySpec {
    Arch arch = Arch::logistic_regression;
    std::vector<std::size_t> hidden;  // mlp only
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;
    nn::OptKind optimizer = nn::OptKind::adam;
    // per_subset derives the training seed from (seed, subset indices) so
    // the T subset trainings are independent yet replayable.
    SeedPolicy seed_policy = SeedPolicy::per_subset;
};

struct MetricSpec {
    enum class Kind { top1_accuracy, topk_accuracy };
    Kind kind = Kind::top1_accuracy;
    int k = 1;
};

nn::DenseNet make_classifier(const ProxySpec& spec, std::size_t input_dim, int class_count,
                             Rng& rng);

nn::DenseNet train_classifier(const ProxySpec& spec, const data::Dataset& train_set,
                              std::uint64_t seed);

// Metric function u: fraction of validation points whose true label is the
// argmax (top-1) or among the k largest logits (top-k). Argmax ties break
// toward the lowest class index.
double score(const nn::DenseNet& net, const data::Dataset& dataset, const MetricSpec& metric);

// u(A(S), L_val) for the subset S of L_tr given by `subset_indices`.
// Deterministic given (subset, seed, specs); a single-class subset is fine,
// the classifier just trains degenerately.
double train_and_score(const std::vector<int>& subset_indices, const data::Dataset& train_set,
                       const data::Dataset& val_set, const ProxySpec& spec,
                       const MetricSpec& metric, std::uint64_t seed);

}  // namespace dulo::proxy
