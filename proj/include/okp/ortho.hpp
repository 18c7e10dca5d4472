#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "okp/data.hpp"
#include "okp/network.hpp"

namespace okp {

struct OrthoConfig {
    float lambda_ortho = 0.01f; // weight of the orthogonality penalty, in [0,1)
    float epsilon_guard = 1e-12f;
    bool use_squared_variant = false; // ||G||_F^2 instead of ||G||_F

    void validate() const;
};

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    float eta0 = 0.05f;
    float alpha = 0.9f; // per-epoch learning-rate decay
    std::uint64_t seed = 0;

    void validate() const;

    /// eta_t = eta0 * alpha^t for 0-based epoch t.
    [[nodiscard]] double learning_rate(std::size_t epoch) const
    {
        return static_cast<double>(eta0) * std::pow(static_cast<double>(alpha), static_cast<double>(epoch));
    }
};

/// [C_out, C_in, k, k] -> [C_out, C_in*k*k]; row j is filter j in (C_in, k, k) row-major order.
template <typename T>
BasicTensor<T> reshape_kernels(const BasicTensor<T>& weights)
{
    if (weights.rank() != 4) {
        throw ShapeError("reshape_kernels: expected a 4-D kernel tensor, got " + shape_to_string(weights.shape()));
    }
    const std::size_t rows = weights.extent(0);
    return weights.reshaped({rows, weights.size() / rows});
}

namespace detail {

/// G = Wm Wm^T - I, accumulated in double.
template <typename T>
std::vector<double> gram_deviation(const BasicTensor<T>& wm)
{
    if (wm.rank() != 2) {
        throw ShapeError("orthogonality penalty expects a 2-D matrix, got " + shape_to_string(wm.shape()));
    }
    const std::size_t rows = wm.extent(0);
    const std::size_t cols = wm.extent(1);
    std::vector<double> g(rows * rows);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < rows; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < cols; ++k) {
                acc += static_cast<double>(wm[i * cols + k]) * static_cast<double>(wm[j * cols + k]);
            }
            g[i * rows + j] = acc - (i == j ? 1.0 : 0.0);
        }
    }
    return g;
}

inline double frobenius(const std::vector<double>& m)
{
    double acc = 0.0;
    for (double v : m) {
        acc += v * v;
    }
    return std::sqrt(acc);
}

} // namespace detail

/// ||Wm Wm^T - I||_F (or its square with `squared`).
template <typename T>
T ortho_loss(const BasicTensor<T>& wm, bool squared = false)
{
    const double norm = detail::frobenius(detail::gram_deviation(wm));
    return static_cast<T>(squared ? norm * norm : norm);
}

/// Gradient of ortho_loss. Unsquared: 2 G Wm / ||G||_F, and exactly zero when
/// ||G||_F <= eps (the nondifferentiable minimum). Squared: 4 G Wm.
template <typename T>
BasicTensor<T> ortho_loss_grad(const BasicTensor<T>& wm, double eps, bool squared = false)
{
    const auto g = detail::gram_deviation(wm);
    const std::size_t rows = wm.extent(0);
    const std::size_t cols = wm.extent(1);
    BasicTensor<T> out(wm.shape());
    double scale = 4.0;
    if (!squared) {
        const double norm = detail::frobenius(g);
        if (norm <= eps) {
            return out;
        }
        scale = 2.0 / norm;
    }
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t k = 0; k < cols; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < rows; ++j) {
                acc += g[i * rows + j] * static_cast<double>(wm[j * cols + k]);
            }
            out[i * cols + k] = static_cast<T>(scale * acc);
        }
    }
    return out;
}

/// Mean absolute off-diagonal entry of Wm Wm^T: a direct measure of filter correlation.
template <typename T>
double mean_abs_offdiag_gram(const BasicTensor<T>& wm)
{
    const auto g = detail::gram_deviation(wm);
    const std::size_t rows = wm.extent(0);
    if (rows < 2) {
        return 0.0;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < rows; ++j) {
            if (i != j) {
                acc += std::abs(g[i * rows + j]);
            }
        }
    }
    return acc / static_cast<double>(rows * (rows - 1));
}

template <typename T>
struct LossBreakdown {
    T total;
    T cross_entropy;
    T ortho; // unweighted sum over conv layers
};

/// L = CE + lambda * sum_l ortho_loss(reshape_kernels(W_l)). Resets and then fills
/// every parameter gradient of `net`.
template <typename T>
LossBreakdown<T> total_loss(BasicNetwork<T>& net, const BasicTensor<T>& batch, std::span<const int> labels,
                            const OrthoConfig& cfg)
{
    net.zero_grad();
    const auto tape = net.forward_recorded(batch);
    const auto ce = ops::softmax_cross_entropy(tape.logits, labels);
    net.backward(tape, ops::softmax_cross_entropy_backward(ce.probabilities, labels));

    LossBreakdown<T> out{ce.loss, ce.loss, T{0}};
    if (cfg.lambda_ortho == 0.0f) {
        return out;
    }
    const T lambda = static_cast<T>(cfg.lambda_ortho);
    for (std::size_t l = 0; l < net.conv_layer_count(); ++l) {
        auto& w = net.conv_layer(l).weight;
        const auto wm = reshape_kernels(w.value);
        out.ortho += ortho_loss(wm, cfg.use_squared_variant);
        const auto grad = ortho_loss_grad(wm, cfg.epsilon_guard, cfg.use_squared_variant);
        for (std::size_t i = 0; i < grad.size(); ++i) {
            w.gradient[i] += lambda * grad[i];
        }
    }
    out.total = out.cross_entropy + lambda * out.ortho;
    return out;
}

struct TrainResult {
    std::vector<double> epoch_loss; // mean joint loss per epoch
    double seconds = 0.0;
};

/// Plain minibatch SGD with per-epoch exponential decay. Batch order is a
/// seeded permutation per epoch, so identical configs give identical weights.
TrainResult train(Network& net, const LabeledDataset& dataset, const TrainConfig& tcfg, const OrthoConfig& ocfg);

} // namespace okp
