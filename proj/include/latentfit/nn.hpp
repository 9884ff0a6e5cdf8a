#pragma once

// Dense feed-forward networks: forward pass, MSE loss, backpropagation, plain SGD and FLOP
// accounting.
//
// Bias convention: every layer computes  a_out = F(W * a_in - b),  i.e. the bias is
// SUBTRACTED. A network written for the additive convention W * a_in + b' is the same
// network with b = -b'. Gradients below are taken with respect to the subtracted b.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "latentfit/errors.hpp"
#include "latentfit/rng.hpp"

namespace latentfit {

template <class T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class Activation : std::uint8_t { identity = 0, tanh = 1 };

inline std::string_view to_string(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

template <class T>
struct BasicDenseLayer {
    MatrixX<T> weights;  // n_out x n_in
    VectorX<T> biases;   // n_out
    Activation activation = Activation::tanh;

    BasicDenseLayer() = default;
    BasicDenseLayer(std::size_t n_in, std::size_t n_out, Activation act)
        : weights(MatrixX<T>::Zero(static_cast<Eigen::Index>(n_out), static_cast<Eigen::Index>(n_in))),
          biases(VectorX<T>::Zero(static_cast<Eigen::Index>(n_out))),
          activation(act) {}

    [[nodiscard]] std::size_t n_in() const noexcept { return static_cast<std::size_t>(weights.cols()); }
    [[nodiscard]] std::size_t n_out() const noexcept { return static_cast<std::size_t>(weights.rows()); }

    void validate() const {
        detail::require(weights.rows() > 0 && weights.cols() > 0, "dense layer needs non-empty weights");
        detail::require(biases.size() == weights.rows(), "bias length must equal the layer output width");
        detail::require(weights.allFinite() && biases.allFinite(), "dense layer has non-finite entries");
    }

    template <class U>
    [[nodiscard]] BasicDenseLayer<U> cast() const {
        BasicDenseLayer<U> out;
        out.weights = weights.template cast<U>();
        out.biases = biases.template cast<U>();
        out.activation = activation;
        return out;
    }
};

/// Half-open range of layer indices [first, last).
struct LayerRange {
    std::size_t first = 0;
    std::size_t last = 0;

    [[nodiscard]] std::size_t size() const noexcept { return last - first; }
    friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

template <class T>
class BasicDenseNetwork {
public:
    BasicDenseNetwork() = default;
    explicit BasicDenseNetwork(std::size_t input_dim) : input_dim_(input_dim) {}

    void add_layer(BasicDenseLayer<T> layer) {
        layer.validate();
        detail::require(layer.n_in() == output_dim(),
                        "layer input width " + std::to_string(layer.n_in()) +
                            " does not match previous width " + std::to_string(output_dim()));
        layers_.push_back(std::move(layer));
        ++revision_;
    }

    [[nodiscard]] std::size_t input_dim() const noexcept { return input_dim_; }
    [[nodiscard]] std::size_t output_dim() const noexcept {
        return layers_.empty() ? input_dim_ : layers_.back().n_out();
    }
    [[nodiscard]] std::size_t size() const noexcept { return layers_.size(); }
    [[nodiscard]] bool empty() const noexcept { return layers_.empty(); }

    [[nodiscard]] const BasicDenseLayer<T>& layer(std::size_t i) const { return layers_.at(i); }
    [[nodiscard]] std::span<const BasicDenseLayer<T>> layers() const noexcept { return layers_; }

    /// Mutable access invalidates outstanding forward caches.
    BasicDenseLayer<T>& mutable_layer(std::size_t i) {
        ++revision_;
        return layers_.at(i);
    }

    /// Drops every layer from index `count` on.
    void truncate(std::size_t count) {
        if (count < layers_.size()) layers_.resize(count);
        ++revision_;
    }

    /// Widths including the input layer, e.g. {1000, 50, 1, 50, 1000}.
    [[nodiscard]] std::vector<std::size_t> widths() const {
        std::vector<std::size_t> w{input_dim_};
        for (const auto& l : layers_) w.push_back(l.n_out());
        return w;
    }

    [[nodiscard]] LayerRange all() const noexcept { return {0, layers_.size()}; }

    /// Width of the activations entering layer `i` (i == size() gives the output width).
    [[nodiscard]] std::size_t width_before(std::size_t i) const {
        return i == 0 ? input_dim_ : layers_.at(i - 1).n_out();
    }

    [[nodiscard]] std::uint64_t revision() const noexcept { return revision_; }

    void validate() const {
        std::size_t width = input_dim_;
        detail::require(width > 0, "network input dimension must be positive");
        for (const auto& l : layers_) {
            l.validate();
            detail::require(l.n_in() == width, "inconsistent layer widths");
            width = l.n_out();
        }
    }

    template <class U>
    [[nodiscard]] BasicDenseNetwork<U> cast() const {
        BasicDenseNetwork<U> out(input_dim_);
        for (const auto& l : layers_) out.add_layer(l.template cast<U>());
        return out;
    }

private:
    std::size_t input_dim_ = 0;
    std::vector<BasicDenseLayer<T>> layers_;
    std::uint64_t revision_ = 0;
};

using DenseLayer = BasicDenseLayer<double>;
using DenseNetwork = BasicDenseNetwork<double>;

namespace detail {

/// Largest value below 1. Rounded tanh reaches exactly 1 for |x| > ~19 in double; clamping
/// keeps every tanh output inside (-1, 1) and its derivative nonzero.
template <class T>
inline constexpr T tanh_bound = T(1) - std::numeric_limits<T>::epsilon() / 2;

template <class Derived>
void bounded_tanh(Eigen::MatrixBase<Derived>& values) {
    using T = typename Derived::Scalar;
    values.derived() = values.array().tanh().cwiseMax(-tanh_bound<T>).cwiseMin(tanh_bound<T>).matrix();
}

template <class Derived>
void apply_activation(Eigen::MatrixBase<Derived>& values, Activation act) {
    if (act == Activation::tanh) bounded_tanh(values);
}

inline void check_range(std::size_t network_size, LayerRange range) {
    require(range.first <= range.last && range.last <= network_size, "layer range out of bounds");
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Initialisation

/// Uniform on [-g*sqrt(6/(n_in+n_out)), +g*sqrt(6/(n_in+n_out))], biases zero.
inline void glorot_uniform(DenseLayer& layer, Rng& rng, double gain = 1.0) {
    const double limit = gain * std::sqrt(6.0 / static_cast<double>(layer.n_in() + layer.n_out()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
            layer.weights(r, c) = rng.uniform(-limit, limit);
    layer.biases.setZero();
}

/// Builds a freshly initialised network. `gains` (optional) scales the init range per layer.
inline DenseNetwork make_network(std::span<const std::size_t> widths, Activation activation,
                                 std::uint64_t seed, std::span<const double> gains = {}) {
    detail::require(widths.size() >= 2, "a network needs an input width and at least one layer");
    detail::require(gains.empty() || gains.size() == widths.size() - 1, "one init gain per layer");
    Rng rng(seed);
    DenseNetwork net(widths[0]);
    for (std::size_t i = 1; i < widths.size(); ++i) {
        DenseLayer layer(widths[i - 1], widths[i], activation);
        glorot_uniform(layer, rng, gains.empty() ? 1.0 : gains[i - 1]);
        net.add_layer(std::move(layer));
    }
    return net;
}

// ---------------------------------------------------------------------------------------------
// Forward pass

/// Activations retained by a forward pass over a layer range. Columns are samples.
struct ForwardCache {
    const void* network = nullptr;
    std::uint64_t revision = 0;
    LayerRange range;
    std::vector<Eigen::MatrixXd> activations;      // [0] is the input, [i+1] the output of layer first+i
    std::vector<Eigen::MatrixXd> pre_activations;  // W a - b for each layer

    [[nodiscard]] const Eigen::MatrixXd& output() const { return activations.back(); }
    [[nodiscard]] Eigen::Index batch_size() const { return activations.front().cols(); }
};

inline ForwardCache forward(const DenseNetwork& net, const Eigen::MatrixXd& inputs, LayerRange range) {
    detail::check_range(net.size(), range);
    detail::require(static_cast<std::size_t>(inputs.rows()) == net.width_before(range.first),
                    "input length " + std::to_string(inputs.rows()) + " does not match layer input width " +
                        std::to_string(net.width_before(range.first)));
    ForwardCache cache;
    cache.network = &net;
    cache.revision = net.revision();
    cache.range = range;
    cache.activations.reserve(range.size() + 1);
    cache.pre_activations.reserve(range.size());
    cache.activations.push_back(inputs);
    for (std::size_t i = range.first; i < range.last; ++i) {
        const DenseLayer& layer = net.layer(i);
        Eigen::MatrixXd z = layer.weights * cache.activations.back();
        z.colwise() -= layer.biases;
        Eigen::MatrixXd a = z;
        detail::apply_activation(a, layer.activation);
        cache.pre_activations.push_back(std::move(z));
        cache.activations.push_back(std::move(a));
    }
    return cache;
}

inline ForwardCache forward(const DenseNetwork& net, const Eigen::MatrixXd& inputs) {
    return forward(net, inputs, net.all());
}

inline ForwardCache forward(const DenseNetwork& net, std::span<const double> input) {
    const Eigen::Map<const Eigen::MatrixXd> column(input.data(), static_cast<Eigen::Index>(input.size()), 1);
    return forward(net, Eigen::MatrixXd(column), net.all());
}

/// Reusable buffers for allocation-free single-signal inference.
template <class T>
struct InferenceWorkspace {
    VectorX<T> a;
    VectorX<T> b;
};

/// Runs layers [range.first, range.last) on one input without keeping a cache.
template <class T>
const VectorX<T>& infer(const BasicDenseNetwork<T>& net, std::span<const T> input, LayerRange range,
                        InferenceWorkspace<T>& ws) {
    const Eigen::Map<const VectorX<T>> x(input.data(), static_cast<Eigen::Index>(input.size()));
    if (range.first == range.last) {
        ws.a = x;
        return ws.a;
    }
    for (std::size_t i = range.first; i < range.last; ++i) {
        const auto& layer = net.layer(i);
        if (i == range.first)
            ws.b.noalias() = layer.weights * x;
        else
            ws.b.noalias() = layer.weights * ws.a;
        ws.b -= layer.biases;
        if (layer.activation == Activation::tanh) detail::bounded_tanh(ws.b);
        ws.a.swap(ws.b);
    }
    return ws.a;
}

template <class T>
VectorX<T> infer(const BasicDenseNetwork<T>& net, std::span<const T> input, LayerRange range) {
    detail::check_range(net.size(), range);
    detail::require(input.size() == net.width_before(range.first), "input length does not match network");
    InferenceWorkspace<T> ws;
    return infer(net, input, range, ws);
}

template <class T>
VectorX<T> infer(const BasicDenseNetwork<T>& net, std::span<const T> input) {
    return infer(net, input, net.all());
}

// ---------------------------------------------------------------------------------------------
// Loss and gradients

/// Mean over components of squared differences.
inline double mse_loss(std::span<const double> pred, std::span<const double> target) {
    detail::require(pred.size() == target.size(), "mse_loss: length mismatch");
    detail::require(!pred.empty(), "mse_loss: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.size());
}

inline double mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    detail::require(pred.rows() == target.rows() && pred.cols() == target.cols(), "mse_loss: shape mismatch");
    detail::require(pred.size() > 0, "mse_loss: empty input");
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

struct Gradients {
    LayerRange range;
    std::vector<Eigen::MatrixXd> d_weights;
    std::vector<Eigen::VectorXd> d_biases;
};

/// Exact gradients of mse_loss(output, targets), averaged over every output component of every
/// column, with respect to the weights and (subtracted) biases of the cached layer range.
inline Gradients backward(const DenseNetwork& net, const ForwardCache& cache, const Eigen::MatrixXd& targets) {
    if (cache.network != &net || cache.revision != net.revision())
        throw InvalidState("forward cache does not belong to the current network state");
    if (cache.activations.size() != cache.range.size() + 1 || cache.range.last > net.size())
        throw InvalidState("forward cache is incomplete");
    const Eigen::MatrixXd& out = cache.output();
    detail::require(targets.rows() == out.rows() && targets.cols() == out.cols(),
                    "target shape does not match network output");

    const std::size_t n = cache.range.size();
    Gradients g;
    g.range = cache.range;
    g.d_weights.resize(n);
    g.d_biases.resize(n);

    // dL/da for the output activations.
    Eigen::MatrixXd delta = (out - targets) * (2.0 / static_cast<double>(out.size()));
    for (std::size_t k = n; k-- > 0;) {
        const DenseLayer& layer = net.layer(cache.range.first + k);
        if (layer.activation == Activation::tanh) {
            const Eigen::MatrixXd& a = cache.activations[k + 1];
            delta.array() *= (1.0 - a.array().square());
        }
        // delta now holds dL/dz with z = W a_prev - b.
        g.d_weights[k].noalias() = delta * cache.activations[k].transpose();
        g.d_biases[k] = -delta.rowwise().sum();
        if (k > 0) {
            Eigen::MatrixXd prev = layer.weights.transpose() * delta;
            delta = std::move(prev);
        }
    }
    return g;
}

inline Gradients backward(const DenseNetwork& net, const ForwardCache& cache, std::span<const double> target) {
    const Eigen::Map<const Eigen::MatrixXd> column(target.data(), static_cast<Eigen::Index>(target.size()), 1);
    return backward(net, cache, Eigen::MatrixXd(column));
}

/// theta <- theta - learning_rate * grad for every weight and bias in the gradient's range.
inline void sgd_step(DenseNetwork& net, const Gradients& grads, double learning_rate) {
    detail::require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning rate must be positive");
    detail::check_range(net.size(), grads.range);
    detail::require(grads.d_weights.size() == grads.range.size() && grads.d_biases.size() == grads.range.size(),
                    "gradient layer count does not match its range");
    for (std::size_t k = 0; k < grads.range.size(); ++k) {
        const DenseLayer& cur = net.layer(grads.range.first + k);
        detail::require(grads.d_weights[k].rows() == cur.weights.rows() &&
                            grads.d_weights[k].cols() == cur.weights.cols() &&
                            grads.d_biases[k].size() == cur.biases.size(),
                        "gradient shape does not match layer " + std::to_string(grads.range.first + k));
    }
    for (std::size_t k = 0; k < grads.range.size(); ++k) {
        DenseLayer& layer = net.mutable_layer(grads.range.first + k);
        layer.weights -= learning_rate * grads.d_weights[k];
        layer.biases -= learning_rate * grads.d_biases[k];
    }
}

// ---------------------------------------------------------------------------------------------
// Mini-batch training

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
        detail::require(batch_size >= 1, "batch_size must be positive");
        detail::require(epochs >= 1, "epochs must be positive");
    }
};

/// Mean loss of the layer range over all columns, evaluated in chunks.
inline double evaluate_loss(const DenseNetwork& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                            LayerRange range, Eigen::Index chunk = 256) {
    detail::require(inputs.cols() == targets.cols() && inputs.cols() > 0, "inputs/targets column mismatch");
    double sum = 0.0;
    for (Eigen::Index start = 0; start < inputs.cols(); start += chunk) {
        const Eigen::Index len = std::min(chunk, inputs.cols() - start);
        const ForwardCache c = forward(net, Eigen::MatrixXd(inputs.middleCols(start, len)), range);
        sum += (c.output() - targets.middleCols(start, len)).squaredNorm();
    }
    return sum / static_cast<double>(targets.size());
}

/// One shuffled pass of mini-batch SGD over the columns of `inputs`. Returns the mean batch
/// loss weighted by batch size. `rng` drives the shuffle only.
inline double train_epoch(DenseNetwork& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                          LayerRange range, const TrainConfig& config, Rng& rng) {
    config.validate();
    const auto n = static_cast<std::size_t>(inputs.cols());
    detail::require(n > 0 && targets.cols() == inputs.cols(), "inputs/targets column mismatch");
    detail::require(config.batch_size <= n, "batch_size exceeds the number of training samples");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    Eigen::MatrixXd batch_in(inputs.rows(), static_cast<Eigen::Index>(config.batch_size));
    Eigen::MatrixXd batch_out(targets.rows(), static_cast<Eigen::Index>(config.batch_size));
    double weighted = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
        const std::size_t len = std::min(config.batch_size, n - start);
        batch_in.resize(inputs.rows(), static_cast<Eigen::Index>(len));
        batch_out.resize(targets.rows(), static_cast<Eigen::Index>(len));
        for (std::size_t j = 0; j < len; ++j) {
            const auto src = static_cast<Eigen::Index>(order[start + j]);
            batch_in.col(static_cast<Eigen::Index>(j)) = inputs.col(src);
            batch_out.col(static_cast<Eigen::Index>(j)) = targets.col(src);
        }
        const ForwardCache cache = forward(net, batch_in, range);
        weighted += mse_loss(cache.output(), batch_out) * static_cast<double>(len);
        sgd_step(net, backward(net, cache, batch_out), config.learning_rate);
    }
    return weighted / static_cast<double>(n);
}

// ---------------------------------------------------------------------------------------------
// FLOP accounting

struct FlopBreakdown {
    std::uint64_t matmul = 0;      // 2 * n_in * n_out per layer (multiply + accumulate)
    std::uint64_t bias = 0;        // one subtraction per output neuron
    std::uint64_t activation = 0;  // one evaluation per non-identity output neuron

    [[nodiscard]] std::uint64_t total() const noexcept { return matmul + bias + activation; }
};

/// Counts layers [0, up_to_layer); by default the whole network.
template <class T>
FlopBreakdown flop_breakdown(const BasicDenseNetwork<T>& net, std::optional<std::size_t> up_to_layer = {}) {
    const std::size_t last = std::min(up_to_layer.value_or(net.size()), net.size());
    FlopBreakdown f;
    for (std::size_t i = 0; i < last; ++i) {
        const auto& l = net.layer(i);
        f.matmul += 2ULL * l.n_in() * l.n_out();
        f.bias += l.n_out();
        if (l.activation != Activation::identity) f.activation += l.n_out();
    }
    return f;
}

/// Headline count: 2 * sum(n_in * n_out) over layers [0, up_to_layer).
template <class T>
std::uint64_t flop_count(const BasicDenseNetwork<T>& net, std::optional<std::size_t> up_to_layer = {}) {
    return flop_breakdown(net, up_to_layer).matmul;
}

/// Headline count for a bare width list, e.g. {1000, 50, 1}.
inline std::uint64_t flop_count(std::span<const std::size_t> widths) {
    std::uint64_t f = 0;
    for (std::size_t i = 1; i < widths.size(); ++i) f += 2ULL * widths[i - 1] * widths[i];
    return f;
}

}  // namespace latentfit
