#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "okp/ops.hpp"
#include "okp/rng.hpp"
#include "okp/tensor.hpp"

namespace okp {

enum class LayerKind { conv, relu, maxpool, flatten, dense };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t out_channels = 0; // conv
    std::size_t kernel = 0;       // conv
    std::size_t stride = 1;       // conv, maxpool
    std::size_t pad = 0;          // conv
    std::size_t window = 0;       // maxpool
    std::size_t units = 0;        // dense

    static LayerSpec conv(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1, std::size_t pad = 0);
    static LayerSpec relu();
    static LayerSpec maxpool(std::size_t window, std::size_t stride);
    static LayerSpec flatten();
    static LayerSpec dense(std::size_t units);

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
    Shape input_shape; // per sample: {C, H, W}
    std::size_t class_count = 0;
    std::vector<LayerSpec> layers;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// conv 8@3x3 -> relu -> maxpool2 -> conv 16@3x3 -> relu -> maxpool2 -> flatten -> dense(classes).
/// Convs use stride 1 and pad 1 so spatial size only changes at the pools.
NetworkSpec desk_spec(std::size_t class_count, Shape input_shape = {1, 28, 28});

/// Per-sample output shape of every layer. Throws ShapeError naming the first
/// layer index whose input does not compose.
std::vector<Shape> infer_shapes(const NetworkSpec& spec);

/// Which map of a conv layer is reported as its activation.
enum class ActivationPoint { post_nonlinearity, pre_nonlinearity };

template <typename T>
struct BasicLayer {
    LayerSpec spec;
    Shape in_shape;  // per sample
    Shape out_shape; // per sample
    BasicGradPair<T> weight;
    BasicGradPair<T> bias;

    [[nodiscard]] bool has_params() const noexcept
    {
        return spec.kind == LayerKind::conv || spec.kind == LayerKind::dense;
    }
};

template <typename T>
struct BasicForwardResult {
    BasicTensor<T> logits;
    std::vector<BasicTensor<T>> activations; // one per conv layer, in order
};

/// Intermediate values recorded by a training forward pass; consumed by backward.
template <typename T>
struct BasicForwardTape {
    std::vector<BasicTensor<T>> inputs; // input to each layer, batch-shaped
    BasicTensor<T> logits;

    [[nodiscard]] bool recorded() const noexcept { return !inputs.empty(); }
};

template <typename T>
class BasicNetwork {
public:
    BasicNetwork() = default;

    /// Allocates zero-valued parameters for a validated spec.
    explicit BasicNetwork(NetworkSpec spec) : spec_(std::move(spec))
    {
        const auto shapes = infer_shapes(spec_);
        Shape in = spec_.input_shape;
        for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
            BasicLayer<T> layer;
            layer.spec = spec_.layers[i];
            layer.in_shape = in;
            layer.out_shape = shapes[i];
            if (layer.spec.kind == LayerKind::conv) {
                layer.weight = BasicGradPair<T>(
                    BasicTensor<T>({layer.spec.out_channels, in[0], layer.spec.kernel, layer.spec.kernel}));
                layer.bias = BasicGradPair<T>(BasicTensor<T>({layer.spec.out_channels}));
                conv_positions_.push_back(i);
            } else if (layer.spec.kind == LayerKind::dense) {
                layer.weight = BasicGradPair<T>(BasicTensor<T>({layer.spec.units, in[0]}));
                layer.bias = BasicGradPair<T>(BasicTensor<T>({layer.spec.units}));
            }
            layers_.push_back(std::move(layer));
            in = shapes[i];
        }
    }

    /// Seeded uniform He-style initialisation: weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases zero.
    static BasicNetwork build(NetworkSpec spec, std::uint64_t seed)
    {
        BasicNetwork net(std::move(spec));
        Rng rng(seed);
        for (auto& layer : net.layers_) {
            if (!layer.has_params()) {
                continue;
            }
            const auto& ws = layer.weight.value.shape();
            std::size_t fan_in = 1;
            for (std::size_t a = 1; a < ws.size(); ++a) {
                fan_in *= ws[a];
            }
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (auto& w : layer.weight.value.data()) {
                w = static_cast<T>(rng.uniform(-bound, bound));
            }
        }
        return net;
    }

    [[nodiscard]] const NetworkSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] std::span<BasicLayer<T>> layers() noexcept { return layers_; }
    [[nodiscard]] std::span<const BasicLayer<T>> layers() const noexcept { return layers_; }

    [[nodiscard]] std::size_t conv_layer_count() const noexcept { return conv_positions_.size(); }

    /// Position in layers() of conv layer `l` (0-based among conv layers).
    [[nodiscard]] std::size_t conv_position(std::size_t l) const
    {
        if (l >= conv_positions_.size()) {
            throw ConfigError("conv layer index " + std::to_string(l) + " out of range, network has "
                              + std::to_string(conv_positions_.size()) + " conv layers");
        }
        return conv_positions_[l];
    }

    [[nodiscard]] BasicLayer<T>& conv_layer(std::size_t l) { return layers_[conv_position(l)]; }
    [[nodiscard]] const BasicLayer<T>& conv_layer(std::size_t l) const { return layers_[conv_position(l)]; }

    [[nodiscard]] std::vector<BasicGradPair<T>*> parameters()
    {
        std::vector<BasicGradPair<T>*> out;
        for (auto& layer : layers_) {
            if (layer.has_params()) {
                out.push_back(&layer.weight);
                out.push_back(&layer.bias);
            }
        }
        return out;
    }

    [[nodiscard]] std::size_t parameter_count() const
    {
        std::size_t total = 0;
        for (const auto& layer : layers_) {
            if (layer.has_params()) {
                total += layer.weight.value.size() + layer.bias.value.size();
            }
        }
        return total;
    }

    void zero_grad()
    {
        for (auto* p : parameters()) {
            p->zero_grad();
        }
    }

    [[nodiscard]] BasicForwardResult<T> forward(const BasicTensor<T>& batch,
                                                ActivationPoint point = ActivationPoint::post_nonlinearity) const
    {
        check_batch(batch);
        BasicForwardResult<T> result;
        BasicTensor<T> x = batch;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            x = apply(layers_[i], x);
            if (layers_[i].spec.kind == LayerKind::conv) {
                const bool next_is_relu = i + 1 < layers_.size() && layers_[i + 1].spec.kind == LayerKind::relu;
                if (point == ActivationPoint::pre_nonlinearity || !next_is_relu) {
                    result.activations.push_back(x);
                }
            } else if (layers_[i].spec.kind == LayerKind::relu && i > 0
                       && layers_[i - 1].spec.kind == LayerKind::conv
                       && point == ActivationPoint::post_nonlinearity) {
                result.activations.push_back(x);
            }
        }
        result.logits = std::move(x);
        return result;
    }

    [[nodiscard]] BasicTensor<T> logits(const BasicTensor<T>& batch) const
    {
        check_batch(batch);
        BasicTensor<T> x = batch;
        for (const auto& layer : layers_) {
            x = apply(layer, x);
        }
        return x;
    }

    [[nodiscard]] BasicForwardTape<T> forward_recorded(const BasicTensor<T>& batch) const
    {
        check_batch(batch);
        BasicForwardTape<T> tape;
        BasicTensor<T> x = batch;
        for (const auto& layer : layers_) {
            tape.inputs.push_back(x);
            x = apply(layer, x);
        }
        tape.logits = std::move(x);
        return tape;
    }

    /// Accumulates parameter gradients for dL/dlogits = grad_logits.
    void backward(const BasicForwardTape<T>& tape, const BasicTensor<T>& grad_logits)
    {
        if (!tape.recorded() || tape.inputs.size() != layers_.size()) {
            throw StateError("backward called without a recorded forward pass");
        }
        if (grad_logits.shape() != tape.logits.shape()) {
            throw ShapeError("backward: grad_logits shape " + shape_to_string(grad_logits.shape())
                             + " does not match logits " + shape_to_string(tape.logits.shape()));
        }
        BasicTensor<T> g = grad_logits;
        for (std::size_t i = layers_.size(); i-- > 0;) {
            auto& layer = layers_[i];
            const auto& in = tape.inputs[i];
            switch (layer.spec.kind) {
            case LayerKind::conv: {
                auto grads = ops::conv2d_backward(in, layer.weight.value, layer.bias.value, g, layer.spec.stride,
                                                  layer.spec.pad);
                accumulate(layer.weight.gradient, grads.weights);
                accumulate(layer.bias.gradient, grads.bias);
                g = std::move(grads.input);
                break;
            }
            case LayerKind::relu:
                g = ops::relu_backward(in, g);
                break;
            case LayerKind::maxpool:
                g = ops::maxpool2d_backward(in, g, layer.spec.window, layer.spec.stride);
                break;
            case LayerKind::flatten:
                g = g.reshaped(in.shape());
                break;
            case LayerKind::dense: {
                auto grads = ops::dense_backward(in, layer.weight.value, g);
                accumulate(layer.weight.gradient, grads.weights);
                accumulate(layer.bias.gradient, grads.bias);
                g = std::move(grads.input);
                break;
            }
            }
        }
    }

    template <typename U>
    [[nodiscard]] BasicNetwork<U> cast() const
    {
        BasicNetwork<U> out(spec_);
        auto dst = out.layers();
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (layers_[i].has_params()) {
                dst[i].weight = BasicGradPair<U>(layers_[i].weight.value.template cast<U>());
                dst[i].bias = BasicGradPair<U>(layers_[i].bias.value.template cast<U>());
            }
        }
        return out;
    }

private:
    void check_batch(const BasicTensor<T>& batch) const
    {
        if (batch.rank() != spec_.input_shape.size() + 1) {
            throw ShapeError("forward: batch rank " + std::to_string(batch.rank()) + " expected "
                             + std::to_string(spec_.input_shape.size() + 1));
        }
        for (std::size_t a = 0; a < spec_.input_shape.size(); ++a) {
            if (batch.extent(a + 1) != spec_.input_shape[a]) {
                throw ShapeError("forward: batch dimension " + std::to_string(a + 1) + " is "
                                 + std::to_string(batch.extent(a + 1)) + ", network expects "
                                 + std::to_string(spec_.input_shape[a]));
            }
        }
    }

    static BasicTensor<T> apply(const BasicLayer<T>& layer, const BasicTensor<T>& x)
    {
        switch (layer.spec.kind) {
        case LayerKind::conv:
            return ops::conv2d(x, layer.weight.value, layer.bias.value, layer.spec.stride, layer.spec.pad);
        case LayerKind::relu:
            return ops::relu(x);
        case LayerKind::maxpool:
            return ops::maxpool2d(x, layer.spec.window, layer.spec.stride);
        case LayerKind::flatten:
            return x.reshaped({x.extent(0), x.size() / x.extent(0)});
        case LayerKind::dense:
            return ops::dense(x, layer.weight.value, layer.bias.value);
        }
        throw StateError("unknown layer kind");
    }

    static void accumulate(BasicTensor<T>& into, const BasicTensor<T>& delta)
    {
        for (std::size_t i = 0; i < into.size(); ++i) {
            into[i] += delta[i];
        }
    }

    NetworkSpec spec_;
    std::vector<BasicLayer<T>> layers_;
    std::vector<std::size_t> conv_positions_;
};

using Network = BasicNetwork<float>;
using Network64 = BasicNetwork<double>;
using ForwardResult = BasicForwardResult<float>;
using ForwardTape = BasicForwardTape<float>;
using Layer = BasicLayer<float>;

} // namespace okp
