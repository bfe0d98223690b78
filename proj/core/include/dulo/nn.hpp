#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dulo/matrix.hpp"
#include "dulo/rng.hpp"

namespace dulo::nn {

enum class Activation : std::uint32_t { relu = 0, identity = 1 };

struct Layer {
    Matrix weight;             // out x in, row-major
    std::vector<double> bias;  // out
    Activation activation = Activation::identity;

    std::size_t in_dim() const { return weight.cols; }
    std::size_t out_dim() const { return weight.rows; }
};

// Plain fully-connected stack. Layer dimensions chain; weights are
// finite after construction and after every optimizer step.
struct DenseNet {
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.back().out_dim(); }
    std::size_t parameter_count() const;
};

// Glorot-uniform weights, zero biases. Hidden layers get relu, the final
// layer is linear.
DenseNet make_net(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                  std::size_t output_dim, Rng& rng);

// Batched forward pass; row i of the result depends only on row i of batch.
Matrix forward(const DenseNet& net, const Matrix& batch);

// Forward pass that keeps per-layer pre/post activations for backprop.
struct ForwardTrace {
    Matrix input;
    std::vector<Matrix> pre;   // one per layer
    std::vector<Matrix> post;  // one per layer; post.back() is the output
};
ForwardTrace forward_trace(const DenseNet& net, const Matrix& batch);

// Gradients shaped like the parameters of one net.
struct NetGrads {
    std::vector<Matrix> weight;
    std::vector<std::vector<double>> bias;

    void scale(double s);
    void add(const NetGrads& other);
    bool finite() const;
};
NetGrads zero_grads_like(const DenseNet& net);

// Backprop an upstream gradient dL/d(output) through the traced net.
// Accumulates parameter gradients into `grads` and returns dL/d(input).
Matrix backward_from(const DenseNet& net, const ForwardTrace& trace,
                     const Matrix& upstream, NetGrads& grads);

enum class LossKind { softmax_cross_entropy, mean_squared_error };
struct LossSpec {
    LossKind kind = LossKind::softmax_cross_entropy;
};

// Mean loss over the batch and its exact analytic parameter gradients.
// Cross-entropy uses max-subtracted softmax fused with the log loss.
// MSE is the batch mean of the per-row squared-error sums.
struct LossResult {
    double loss = 0.0;
    NetGrads grads;
};
LossResult backward(const DenseNet& net, const Matrix& batch,
                    std::span<const int> class_targets, const LossSpec& loss);
LossResult backward(const DenseNet& net, const Matrix& batch,
                    const Matrix& value_targets, const LossSpec& loss);

// Loss value only (no gradients), same definitions as backward().
double loss_value(const DenseNet& net, const Matrix& batch,
                  std::span<const int> class_targets, const LossSpec& loss);
double loss_value(const DenseNet& net, const Matrix& batch,
                  const Matrix& value_targets, const LossSpec& loss);

enum class OptKind { sgd, adam };
struct OptimizerConfig {
    OptKind kind = OptKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    OptimizerConfig config;
    std::int64_t step_count = 0;
    // Moment accumulators exist iff kind == adam.
    NetGrads first_moment;
    NetGrads second_moment;
};
OptimizerState make_optimizer(const DenseNet& net, const OptimizerConfig& config);

// One update: sgd p -= lr*g, adam the standard bias-corrected rule.
// Rejects non-finite gradients; parameters are checked finite afterwards.
void step(DenseNet& net, const NetGrads& grads, OptimizerState& state);

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    OptimizerConfig optimizer;
    LossSpec loss;
};

struct TrainResult {
    DenseNet net;
    std::vector<double> epoch_mean_loss;
};

// Minibatch training; data order reshuffled every epoch with `rng`.
// Pure function of (net, data, config, rng state).
TrainResult train(DenseNet net, const Matrix& features,
                  std::span<const int> class_targets, const TrainConfig& config, Rng& rng);
TrainResult train(DenseNet net, const Matrix& features,
                  const Matrix& value_targets, const TrainConfig& config, Rng& rng);

// Versioned flat weight file: {version u32, layer count u32}, then per
// layer {in u32, out u32, activation u32, row-major weights f64, bias f64},
// all little-endian.
void save_net(const DenseNet& net, const std::string& path);
DenseNet load_net(const std::string& path);

}  // namespace dulo::nn
