#include "okp/network.hpp"

namespace okp {

std::string to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::conv:
        return "conv";
    case LayerKind::relu:
        return "relu";
    case LayerKind::maxpool:
        return "maxpool";
    case LayerKind::flatten:
        return "flatten";
    case LayerKind::dense:
        return "dense";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name)
{
    for (auto kind : {LayerKind::conv, LayerKind::relu, LayerKind::maxpool, LayerKind::flatten, LayerKind::dense}) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    throw ConfigError("unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::conv(std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t pad)
{
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    return s;
}

LayerSpec LayerSpec::relu()
{
    return LayerSpec{};
}

LayerSpec LayerSpec::maxpool(std::size_t window, std::size_t stride)
{
    LayerSpec s;
    s.kind = LayerKind::maxpool;
    s.window = window;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::flatten()
{
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

LayerSpec LayerSpec::dense(std::size_t units)
{
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.units = units;
    return s;
}

NetworkSpec desk_spec(std::size_t class_count, Shape input_shape)
{
    return NetworkSpec{std::move(input_shape),
                       class_count,
                       {LayerSpec::conv(8, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
                        LayerSpec::conv(16, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
                        LayerSpec::flatten(), LayerSpec::dense(class_count)}};
}

std::vector<Shape> infer_shapes(const NetworkSpec& spec)
{
    if (spec.input_shape.size() != 3) {
        throw ShapeError("network input shape must be {C,H,W}, got " + shape_to_string(spec.input_shape));
    }
    for (auto e : spec.input_shape) {
        if (e == 0) {
            throw ShapeError("network input extents must be >= 1");
        }
    }
    if (spec.class_count < 2) {
        throw ShapeError("class_count must be >= 2");
    }
    if (spec.layers.empty() || spec.layers.back().kind != LayerKind::dense) {
        throw ShapeError("network spec must end in a dense layer");
    }
    if (spec.layers.back().units != spec.class_count) {
        throw ShapeError("layer " + std::to_string(spec.layers.size() - 1) + ": final dense width "
                         + std::to_string(spec.layers.back().units) + " differs from class_count "
                         + std::to_string(spec.class_count));
    }

    std::vector<Shape> out;
    Shape cur = spec.input_shape;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + "): ";
        switch (l.kind) {
        case LayerKind::conv: {
            if (cur.size() != 3) {
                throw ShapeError(where + "expects a {C,H,W} input, got " + shape_to_string(cur));
            }
            if (l.out_channels == 0 || l.kernel == 0 || l.stride == 0) {
                throw ShapeError(where + "out_channels, kernel and stride must be >= 1");
            }
            if (l.kernel > cur[1] + 2 * l.pad || l.kernel > cur[2] + 2 * l.pad) {
                throw ShapeError(where + "kernel " + std::to_string(l.kernel) + " exceeds padded input "
                                 + shape_to_string(cur));
            }
            cur = {l.out_channels, (cur[1] + 2 * l.pad - l.kernel) / l.stride + 1,
                   (cur[2] + 2 * l.pad - l.kernel) / l.stride + 1};
            break;
        }
        case LayerKind::relu:
            break;
        case LayerKind::maxpool: {
            if (cur.size() != 3) {
                throw ShapeError(where + "expects a {C,H,W} input, got " + shape_to_string(cur));
            }
            if (l.window == 0 || l.stride == 0) {
                throw ShapeError(where + "window and stride must be >= 1");
            }
            if (l.window > cur[1] || l.window > cur[2]) {
                throw ShapeError(where + "window " + std::to_string(l.window) + " exceeds input "
                                 + shape_to_string(cur));
            }
            cur = {cur[0], (cur[1] - l.window) / l.stride + 1, (cur[2] - l.window) / l.stride + 1};
            break;
        }
        case LayerKind::flatten:
            cur = {shape_volume(cur)};
            break;
        case LayerKind::dense:
            if (cur.size() != 1) {
                throw ShapeError(where + "expects a flat input, got " + shape_to_string(cur)
                                 + " (missing flatten?)");
            }
            if (l.units == 0) {
                throw ShapeError(where + "units must be >= 1");
            }
            cur = {l.units};
            break;
        }
        out.push_back(cur);
    }
    return out;
}

} // namespace okp
