#include "dulo/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "dulo/errors.hpp"

namespace dulo::nn {

namespace {

void check_finite(const Matrix& m, std::size_t layer_index, const char* where) {
    for (double v : m.data) {
        if (!std::isfinite(v)) {
            throw NumericError("tensor-nn/" + std::string(where) +
                               ": non-finite activation in layer " + std::to_string(layer_index));
        }
    }
}

// out = act(batch * W^T + b), one layer.
Matrix affine(const Matrix& input, const Layer& layer) {
    Matrix out(input.rows, layer.out_dim());
    for (std::size_t i = 0; i < input.rows; ++i) {
        const double* x = input.data.data() + i * input.cols;
        double* y = out.data.data() + i * out.cols;
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            const double* w = layer.weight.data.data() + o * layer.in_dim();
            double acc = layer.bias[o];
            for (std::size_t k = 0; k < layer.in_dim(); ++k) acc += w[k] * x[k];
            y[o] = acc;
        }
    }
    return out;
}

void apply_activation(Matrix& m, Activation act) {
    if (act == Activation::relu) {
        for (double& v : m.data) v = v > 0.0 ? v : 0.0;
    }
}

void check_batch(const DenseNet& net, const Matrix& batch, const char* op) {
    if (net.layers.empty()) {
        throw ConfigError("tensor-nn/" + std::string(op) + ": net has no layers");
    }
    if (batch.cols != net.input_dim()) {
        throw DataError("tensor-nn/" + std::string(op) + ": batch has " +
                        std::to_string(batch.cols) + " columns, net expects " +
                        std::to_string(net.input_dim()));
    }
}

// Row-wise stable softmax of logits.
Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* z = logits.data.data() + i * logits.cols;
        double* out = p.data.data() + i * p.cols;
        double zmax = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < logits.cols; ++k) zmax = std::max(zmax, z[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < logits.cols; ++k) {
            out[k] = std::exp(z[k] - zmax);
            sum += out[k];
        }
        for (std::size_t k = 0; k < logits.cols; ++k) out[k] /= sum;
    }
    return p;
}

// loss + dL/d(output) for cross-entropy over class targets.
double ce_loss_grad(const Matrix& output, std::span<const int> targets, Matrix* dout) {
    const double n = static_cast<double>(output.rows);
    Matrix p = softmax_rows(output);
    double loss = 0.0;
    for (std::size_t i = 0; i < output.rows; ++i) {
        const int y = targets[i];
        if (y < 0 || static_cast<std::size_t>(y) >= output.cols) {
            throw DataError("tensor-nn/backward: class target " + std::to_string(y) +
                            " out of range for output_dim " + std::to_string(output.cols));
        }
        loss -= std::log(std::max(p(i, static_cast<std::size_t>(y)), 1e-300));
    }
    loss /= n;
    if (dout) {
        for (std::size_t i = 0; i < output.rows; ++i) {
            p(i, static_cast<std::size_t>(targets[i])) -= 1.0;
        }
        for (double& v : p.data) v /= n;
        *dout = std::move(p);
    }
    return loss;
}

double mse_loss_grad(const Matrix& output, const Matrix& targets, Matrix* dout) {
    const double n = static_cast<double>(output.rows);
    double loss = 0.0;
    for (std::size_t i = 0; i < output.data.size(); ++i) {
        const double d = output.data[i] - targets.data[i];
        loss += d * d;
    }
    loss /= n;
    if (dout) {
        Matrix g(output.rows, output.cols);
        for (std::size_t i = 0; i < output.data.size(); ++i) {
            g.data[i] = 2.0 * (output.data[i] - targets.data[i]) / n;
        }
        *dout = std::move(g);
    }
    return loss;
}

void check_targets(const DenseNet& net, const Matrix& batch, std::span<const int> targets,
                   const LossSpec& loss) {
    if (loss.kind != LossKind::softmax_cross_entropy) {
        throw ConfigError("tensor-nn/backward: integer class targets require softmax_cross_entropy");
    }
    if (targets.size() != batch.rows) {
        throw DataError("tensor-nn/backward: " + std::to_string(targets.size()) +
                        " targets for " + std::to_string(batch.rows) + " rows");
    }
    (void)net;
}

void check_targets(const DenseNet& net, const Matrix& batch, const Matrix& targets,
                   const LossSpec& loss) {
    if (loss.kind != LossKind::mean_squared_error) {
        throw ConfigError("tensor-nn/backward: real-valued targets require mean_squared_error");
    }
    if (targets.rows != batch.rows || targets.cols != net.output_dim()) {
        throw DataError("tensor-nn/backward: target shape " + std::to_string(targets.rows) + "x" +
                        std::to_string(targets.cols) + " does not match output " +
                        std::to_string(batch.rows) + "x" + std::to_string(net.output_dim()));
    }
}

template <typename Targets>
LossResult backward_impl(const DenseNet& net, const Matrix& batch, const Targets& targets,
                         const LossSpec& loss) {
    ForwardTrace trace = forward_trace(net, batch);
    Matrix dout;
    LossResult result;
    if constexpr (std::is_same_v<Targets, std::span<const int>>) {
        result.loss = ce_loss_grad(trace.post.back(), targets, &dout);
    } else {
        result.loss = mse_loss_grad(trace.post.back(), targets, &dout);
    }
    result.grads = zero_grads_like(net);
    backward_from(net, trace, dout, result.grads);
    return result;
}

}  // namespace

std::size_t DenseNet::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.weight.data.size() + l.bias.size();
    return n;
}

DenseNet make_net(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                  std::size_t output_dim, Rng& rng) {
    if (input_dim == 0 || output_dim == 0) {
        throw ConfigError("tensor-nn/make_net: zero input or output dimension");
    }
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    for (std::size_t h : hidden) {
        if (h == 0) throw ConfigError("tensor-nn/make_net: zero hidden width");
        dims.push_back(h);
    }
    dims.push_back(output_dim);

    DenseNet net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer;
        const std::size_t fan_in = dims[l];
        const std::size_t fan_out = dims[l + 1];
        layer.weight = Matrix(fan_out, fan_in);
        layer.bias.assign(fan_out, 0.0);
        layer.activation = (l + 2 < dims.size()) ? Activation::relu : Activation::identity;
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& w : layer.weight.data) w = dist(rng);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

Matrix forward(const DenseNet& net, const Matrix& batch) {
    check_batch(net, batch, "forward");
    Matrix current = batch;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        current = affine(current, net.layers[l]);
        apply_activation(current, net.layers[l].activation);
        check_finite(current, l, "forward");
    }
    return current;
}

ForwardTrace forward_trace(const DenseNet& net, const Matrix& batch) {
    check_batch(net, batch, "forward");
    ForwardTrace trace;
    trace.input = batch;
    const Matrix* current = &trace.input;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        trace.pre.push_back(affine(*current, net.layers[l]));
        Matrix post = trace.pre.back();
        apply_activation(post, net.layers[l].activation);
        check_finite(post, l, "forward");
        trace.post.push_back(std::move(post));
        current = &trace.post.back();
    }
    return trace;
}

void NetGrads::scale(double s) {
    for (Matrix& w : weight)
        for (double& v : w.data) v *= s;
    for (auto& b : bias)
        for (double& v : b) v *= s;
}

void NetGrads::add(const NetGrads& other) {
    for (std::size_t l = 0; l < weight.size(); ++l) {
        for (std::size_t i = 0; i < weight[l].data.size(); ++i) weight[l].data[i] += other.weight[l].data[i];
        for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += other.bias[l][i];
    }
}

bool NetGrads::finite() const {
    for (const Matrix& w : weight)
        for (double v : w.data)
            if (!std::isfinite(v)) return false;
    for (const auto& b : bias)
        for (double v : b)
            if (!std::isfinite(v)) return false;
    return true;
}

NetGrads zero_grads_like(const DenseNet& net) {
    NetGrads g;
    for (const Layer& l : net.layers) {
        g.weight.emplace_back(l.out_dim(), l.in_dim());
        g.bias.emplace_back(l.out_dim(), 0.0);
    }
    return g;
}

Matrix backward_from(const DenseNet& net, const ForwardTrace& trace,
                     const Matrix& upstream, NetGrads& grads) {
    if (upstream.rows != trace.input.rows || upstream.cols != net.output_dim()) {
        throw DataError("tensor-nn/backward: upstream gradient shape mismatch");
    }
    Matrix delta = upstream;  // dL/d(post) of the current layer
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const Layer& layer = net.layers[li];
        const Matrix& pre = trace.pre[li];
        // dL/d(pre) = dL/d(post) .* act'(pre)
        if (layer.activation == Activation::relu) {
            for (std::size_t i = 0; i < delta.data.size(); ++i) {
                if (pre.data[i] <= 0.0) delta.data[i] = 0.0;
            }
        }
        const Matrix& input = (li == 0) ? trace.input : trace.post[li - 1];
        Matrix& dw = grads.weight[li];
        std::vector<double>& db = grads.bias[li];
        for (std::size_t i = 0; i < delta.rows; ++i) {
            const double* d = delta.data.data() + i * delta.cols;
            const double* x = input.data.data() + i * input.cols;
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                const double dv = d[o];
                if (dv == 0.0) continue;
                double* wrow = dw.data.data() + o * layer.in_dim();
                for (std::size_t k = 0; k < layer.in_dim(); ++k) wrow[k] += dv * x[k];
                db[o] += dv;
            }
        }
        // dL/d(input) = delta * W
        Matrix dinput(delta.rows, layer.in_dim());
        for (std::size_t i = 0; i < delta.rows; ++i) {
            const double* d = delta.data.data() + i * delta.cols;
            double* di = dinput.data.data() + i * dinput.cols;
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                const double dv = d[o];
                if (dv == 0.0) continue;
                const double* wrow = layer.weight.data.data() + o * layer.in_dim();
                for (std::size_t k = 0; k < layer.in_dim(); ++k) di[k] += dv * wrow[k];
            }
        }
        delta = std::move(dinput);
    }
    return delta;
}

LossResult backward(const DenseNet& net, const Matrix& batch,
                    std::span<const int> class_targets, const LossSpec& loss) {
    check_batch(net, batch, "backward");
    check_targets(net, batch, class_targets, loss);
    return backward_impl(net, batch, class_targets, loss);
}

LossResult backward(const DenseNet& net, const Matrix& batch,
                    const Matrix& value_targets, const LossSpec& loss) {
    check_batch(net, batch, "backward");
    check_targets(net, batch, value_targets, loss);
    return backward_impl(net, batch, value_targets, loss);
}

double loss_value(const DenseNet& net, const Matrix& batch,
                  std::span<const int> class_targets, const LossSpec& loss) {
    check_batch(net, batch, "loss");
    check_targets(net, batch, class_targets, loss);
    return ce_loss_grad(forward(net, batch), class_targets, nullptr);
}

double loss_value(const DenseNet& net, const Matrix& batch,
                  const Matrix& value_targets, const LossSpec& loss) {
    check_batch(net, batch, "loss");
    check_targets(net, batch, value_targets, loss);
    return mse_loss_grad(forward(net, batch), value_targets, nullptr);
}

OptimizerState make_optimizer(const DenseNet& net, const OptimizerConfig& config) {
    if (config.learning_rate <= 0.0) {
        throw ConfigError("tensor-nn/make_optimizer: learning_rate must be positive");
    }
    OptimizerState state;
    state.config = config;
    if (config.kind == OptKind::adam) {
        state.first_moment = zero_grads_like(net);
        state.second_moment = zero_grads_like(net);
    }
    return state;
}

void step(DenseNet& net, const NetGrads& grads, OptimizerState& state) {
    if (grads.weight.size() != net.layers.size()) {
        throw DataError("tensor-nn/step: gradient layer count mismatch");
    }
    if (!grads.finite()) {
        throw NumericError("tensor-nn/step: non-finite gradient, step rejected");
    }
    const OptimizerConfig& c = state.config;
    state.step_count += 1;

    auto update_block = [&](std::size_t li, double* params, const double* g, std::size_t n,
                            double* m, double* v) {
        if (c.kind == OptKind::sgd) {
            for (std::size_t i = 0; i < n; ++i) params[i] -= c.learning_rate * g[i];
        } else {
            const double t = static_cast<double>(state.step_count);
            const double bc1 = 1.0 - std::pow(c.beta1, t);
            const double bc2 = 1.0 - std::pow(c.beta2, t);
            for (std::size_t i = 0; i < n; ++i) {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                params[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.eps);
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(params[i])) {
                throw NumericError("tensor-nn/step: non-finite parameter in layer " +
                                   std::to_string(li));
            }
        }
    };

    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        Layer& layer = net.layers[li];
        double* mw = nullptr;
        double* vw = nullptr;
        double* mb = nullptr;
        double* vb = nullptr;
        if (c.kind == OptKind::adam) {
            mw = state.first_moment.weight[li].data.data();
            vw = state.second_moment.weight[li].data.data();
            mb = state.first_moment.bias[li].data();
            vb = state.second_moment.bias[li].data();
        }
        update_block(li, layer.weight.data.data(), grads.weight[li].data.data(),
                     layer.weight.data.size(), mw, vw);
        update_block(li, layer.bias.data(), grads.bias[li].data(), layer.bias.size(), mb, vb);
    }
}

namespace {

template <typename Targets>
TrainResult train_impl(DenseNet net, const Matrix& features, const Targets& targets,
                       const TrainConfig& config, Rng& rng) {
    if (features.rows == 0) {
        throw DataError("tensor-nn/train: empty dataset");
    }
    if (config.epochs < 1) {
        throw ConfigError("tensor-nn/train: epochs must be >= 1");
    }
    if (config.batch_size < 1) {
        throw ConfigError("tensor-nn/train: batch_size must be >= 1");
    }
    OptimizerState opt = make_optimizer(net, config.optimizer);
    std::vector<std::size_t> order(features.rows);
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            Matrix xb(end - start, features.cols);
            for (std::size_t i = start; i < end; ++i) {
                std::copy(features.row(order[i]).begin(), features.row(order[i]).end(),
                          xb.row(i - start).begin());
            }
            LossResult lr;
            if constexpr (std::is_same_v<Targets, std::span<const int>>) {
                std::vector<int> yb(end - start);
                for (std::size_t i = start; i < end; ++i) yb[i - start] = targets[order[i]];
                lr = backward(net, xb, std::span<const int>(yb), config.loss);
            } else {
                Matrix yb(end - start, targets.cols);
                for (std::size_t i = start; i < end; ++i) {
                    std::copy(targets.row(order[i]).begin(), targets.row(order[i]).end(),
                              yb.row(i - start).begin());
                }
                lr = backward(net, xb, yb, config.loss);
            }
            step(net, lr.grads, opt);
            loss_sum += lr.loss;
            batches += 1;
        }
        result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(batches));
    }
    result.net = std::move(net);
    return result;
}

constexpr std::uint32_t kWeightFormatVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ofstream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw DataError("tensor-nn/load_net: truncated weight file " + path);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::ifstream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        throw DataError("tensor-nn/load_net: truncated weight file " + path);
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

TrainResult train(DenseNet net, const Matrix& features, std::span<const int> class_targets,
                  const TrainConfig& config, Rng& rng) {
    if (class_targets.size() != features.rows) {
        throw DataError("tensor-nn/train: label count does not match row count");
    }
    return train_impl(std::move(net), features, class_targets, config, rng);
}

TrainResult train(DenseNet net, const Matrix& features, const Matrix& value_targets,
                  const TrainConfig& config, Rng& rng) {
    if (value_targets.rows != features.rows) {
        throw DataError("tensor-nn/train: target count does not match row count");
    }
    return train_impl(std::move(net), features, value_targets, config, rng);
}

void save_net(const DenseNet& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("tensor-nn/save_net: cannot open " + path);
    put_u32(out, kWeightFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
    for (const Layer& l : net.layers) {
        put_u32(out, static_cast<std::uint32_t>(l.in_dim()));
        put_u32(out, static_cast<std::uint32_t>(l.out_dim()));
        put_u32(out, static_cast<std::uint32_t>(l.activation));
        for (double w : l.weight.data) put_f64(out, w);
        for (double b : l.bias) put_f64(out, b);
    }
    if (!out) throw DataError("tensor-nn/save_net: write failed for " + path);
}

DenseNet load_net(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("tensor-nn/load_net: cannot open " + path);
    const std::uint32_t version = get_u32(in, path);
    if (version != kWeightFormatVersion) {
        throw DataError("tensor-nn/load_net: unsupported format version " +
                        std::to_string(version) + " in " + path);
    }
    const std::uint32_t layer_count = get_u32(in, path);
    DenseNet net;
    for (std::uint32_t li = 0; li < layer_count; ++li) {
        const std::uint32_t in_dim = get_u32(in, path);
        const std::uint32_t out_dim = get_u32(in, path);
        const std::uint32_t act = get_u32(in, path);
        if (in_dim == 0 || out_dim == 0 || act > 1) {
            throw DataError("tensor-nn/load_net: bad layer header in " + path);
        }
        Layer layer;
        layer.weight = Matrix(out_dim, in_dim);
        layer.bias.assign(out_dim, 0.0);
        layer.activation = static_cast<Activation>(act);
        for (double& w : layer.weight.data) w = get_f64(in, path);
        for (double& b : layer.bias) b = get_f64(in, path);
        if (li > 0 && net.layers.back().out_dim() != in_dim) {
            throw DataError("tensor-nn/load_net: layer dimensions do not chain in " + path);
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

}  // namespace dulo::nn
