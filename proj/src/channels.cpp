#include "okp/channels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "okp/rng.hpp"

namespace okp {

void SelectionConfig::validate() const
{
    if (!(ratio > 0.0f && ratio <= 1.0f)) {
        throw ConfigError("ratio must lie in (0,1], got " + std::to_string(ratio));
    }
    if (samples_per_side < 1) {
        throw ConfigError("samples_per_side must be >= 1");
    }
}

namespace {

constexpr std::size_t kStatsChunk = 128;

/// Mean over samples of the per-filter spatial maximum, accumulated in sample order.
std::vector<double> mean_spatial_max(const Network& net, const Tensor& samples, std::size_t layer,
                                     ActivationPoint point)
{
    const std::size_t n = samples.extent(0);
    const std::size_t stride = samples.size() / n;
    std::vector<double> sums;
    for (std::size_t begin = 0; begin < n; begin += kStatsChunk) {
        const std::size_t count = std::min(kStatsChunk, n - begin);
        Shape shape = samples.shape();
        shape[0] = count;
        std::vector<float> chunk(samples.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                 samples.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * stride));
        const auto fwd = net.forward(Tensor(shape, std::move(chunk)), point);
        const auto& act = fwd.activations.at(layer);
        const std::size_t channels = act.extent(1);
        const std::size_t plane = act.extent(2) * act.extent(3);
        sums.resize(channels, 0.0);
        for (std::size_t s = 0; s < count; ++s) {
            for (std::size_t c = 0; c < channels; ++c) {
                const float* p = act.data().data() + (s * channels + c) * plane;
                sums[c] += static_cast<double>(*std::max_element(p, p + plane));
            }
        }
    }
    for (auto& s : sums) {
        s /= static_cast<double>(n);
    }
    return sums;
}

} // namespace

ChannelStats activation_stats(const Network& net, const Tensor& target_samples, const Tensor& retain_samples,
                              std::size_t layer, ActivationPoint point)
{
    if (target_samples.empty() || retain_samples.empty()) {
        throw ConfigError("activation_stats: both sample batches must be nonempty");
    }
    if (layer >= net.conv_layer_count()) {
        throw ConfigError("activation_stats: layer " + std::to_string(layer) + " is not a conv layer index (network has "
                          + std::to_string(net.conv_layer_count()) + ")");
    }
    const auto target = mean_spatial_max(net, target_samples, layer, point);
    const auto retain = mean_spatial_max(net, retain_samples, layer, point);
    ChannelStats stats{layer, {}};
    for (std::size_t j = 0; j < target.size(); ++j) {
        const auto a_t = static_cast<float>(target[j]);
        const auto a_r = static_cast<float>(retain[j]);
        stats.records.push_back({j, a_t, a_r, a_t - a_r});
    }
    return stats;
}

std::size_t pruned_count(float ratio, std::size_t c_out)
{
    if (!(ratio > 0.0f && ratio <= 1.0f)) {
        throw ConfigError("ratio must lie in (0,1], got " + std::to_string(ratio));
    }
    const double exact = static_cast<double>(ratio) * static_cast<double>(c_out);
    // f32 ratios such as 0.15f carry ~1e-8 relative error; do not let it push ceil up a whole filter.
    const double tol = 1e-6 * std::max(1.0, exact);
    const auto n = static_cast<std::size_t>(std::ceil(exact - tol));
    return std::clamp<std::size_t>(n, 1, c_out);
}

std::vector<std::size_t> select_pruned_set(const ChannelStats& stats, float ratio)
{
    const std::size_t n_p = pruned_count(ratio, stats.records.size());
    std::vector<std::size_t> order(stats.records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return stats.records[a].diff > stats.records[b].diff;
    });
    order.resize(n_p);
    for (auto& i : order) {
        i = stats.records[i].filter;
    }
    return order;
}

SampledSides sample_sides(const Partition& partition, const SelectionConfig& cfg)
{
    cfg.validate();
    if (partition.forget.size() == 0 || partition.retain.size() == 0) {
        throw ConfigError("partition sides must be nonempty");
    }
    Rng rng(cfg.seed);
    const auto target_idx = rng.sample(partition.forget.size(), cfg.samples_per_side);
    const auto retain_idx = rng.sample(partition.retain.size(), cfg.samples_per_side);
    return {partition.forget.batch(target_idx), partition.retain.batch(retain_idx)};
}

PruningPlan build_pruning_plan(const Network& net, const Partition& partition, const SelectionConfig& cfg,
                               float lambda_floor)
{
    const auto [target, retain] = sample_sides(partition, cfg);

    std::vector<std::size_t> layers = cfg.layers;
    if (layers.empty()) {
        layers.resize(net.conv_layer_count());
        std::iota(layers.begin(), layers.end(), std::size_t{0});
    }
    std::sort(layers.begin(), layers.end());
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());

    PruningPlan plan;
    plan.lambda_floor = lambda_floor;
    for (auto l : layers) {
        const auto stats = activation_stats(net, target, retain, l, cfg.point);
        const auto chosen = select_pruned_set(stats, cfg.ratio);
        const auto strengths = pruning_strengths(chosen.size(), lambda_floor);
        for (std::size_t k = 0; k < chosen.size(); ++k) {
            plan.entries.push_back({l, chosen[k], strengths[k], stats.records[chosen[k]].diff});
        }
    }
    plan.validate();
    return plan;
}

} // namespace okp
