#pragma once

// Central finite differences of the joint loss over every network parameter,
// evaluated in double precision.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "okp/ortho.hpp"
#include "oracles.hpp"

namespace gradcheck {

/// ReLU masks and max-pool winners of a recorded pass. A finite difference is
/// only meaningful when both probes keep the same pattern as the base point.
inline std::vector<std::size_t> kink_pattern(const okp::Network64& net, const okp::Tensor64& batch)
{
    const auto tape = net.forward_recorded(batch);
    std::vector<std::size_t> pattern;
    const auto layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& in = tape.inputs[i];
        if (layers[i].spec.kind == okp::LayerKind::relu) {
            for (double v : in.data()) {
                pattern.push_back(v > 0.0 ? 1 : 0);
            }
        } else if (layers[i].spec.kind == okp::LayerKind::maxpool) {
            const std::size_t window = layers[i].spec.window;
            const std::size_t stride = layers[i].spec.stride;
            const std::size_t h = in.extent(2);
            const std::size_t w = in.extent(3);
            const std::size_t oh = (h - window) / stride + 1;
            const std::size_t ow = (w - window) / stride + 1;
            for (std::size_t p = 0; p < in.extent(0) * in.extent(1); ++p) {
                const double* plane = in.data().data() + p * h * w;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        std::size_t best = oy * stride * w + ox * stride;
                        for (std::size_t y = oy * stride; y < oy * stride + window; ++y) {
                            for (std::size_t x = ox * stride; x < ox * stride + window; ++x) {
                                if (plane[y * w + x] > plane[best]) {
                                    best = y * w + x;
                                }
                            }
                        }
                        pattern.push_back(best);
                    }
                }
            }
        }
    }
    return pattern;
}

struct Report {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0; // probes that crossed a ReLU or pooling kink
};

/// Compares the analytic gradient of total_loss with central differences of
/// step `step` for every parameter element.
inline Report check_network(okp::Network64& net, const okp::Tensor64& batch, std::span<const int> labels,
                            const okp::OrthoConfig& cfg, double step, double floor = 1e-6)
{
    (void)okp::total_loss(net, batch, labels, cfg);
    std::vector<okp::Tensor64> analytic;
    for (auto* p : net.parameters()) {
        analytic.push_back(p->gradient);
    }
    const auto base_pattern = kink_pattern(net, batch);

    Report report;
    auto params = net.parameters();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& value = params[pi]->value;
        for (std::size_t k = 0; k < value.size(); ++k) {
            const double keep = value[k];
            value[k] = keep + step;
            const double up = okp::total_loss(net, batch, labels, cfg).total;
            const bool up_same = kink_pattern(net, batch) == base_pattern;
            value[k] = keep - step;
            const double down = okp::total_loss(net, batch, labels, cfg).total;
            const bool down_same = kink_pattern(net, batch) == base_pattern;
            value[k] = keep;
            if (!up_same || !down_same) {
                ++report.skipped;
                continue;
            }
            const double numeric = (up - down) / (2.0 * step);
            report.max_relative_error =
                std::max(report.max_relative_error, oracle::relative_error(analytic[pi][k], numeric, floor));
            ++report.checked;
        }
    }
    return report;
}

} // namespace gradcheck
