#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "okp/data.hpp"
#include "okp/network.hpp"
#include "okp/prune.hpp"

namespace okp {

struct FilterRecord {
    std::size_t filter = 0;
    float a_target = 0.0f; // mean over target samples of the filter's spatial max
    float a_retain = 0.0f;
    float diff = 0.0f; // a_target - a_retain

    friend bool operator==(const FilterRecord&, const FilterRecord&) = default;
};

struct ChannelStats {
    std::size_t layer = 0;
    std::vector<FilterRecord> records; // one per output channel, by filter index

    friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

struct SelectionConfig {
    float ratio = 0.25f;                 // fraction of filters pruned per layer, in (0,1]
    std::size_t samples_per_side = 64;   // forget/retain samples drawn for the statistics
    std::uint64_t seed = 0;
    std::vector<std::size_t> layers;     // conv layers to rank; empty means all
    ActivationPoint point = ActivationPoint::post_nonlinearity;

    void validate() const;
};

/// Per-filter mean spatial-max activation on both batches for conv layer `layer`.
ChannelStats activation_stats(const Network& net, const Tensor& target_samples, const Tensor& retain_samples,
                              std::size_t layer, ActivationPoint point = ActivationPoint::post_nonlinearity);

/// ceil(ratio * c_out), clamped to [1, c_out]; tolerant of f32 representation error in `ratio`.
std::size_t pruned_count(float ratio, std::size_t c_out);

/// The top ceil(ratio * C_out) filters by diff, descending; ties go to the smaller index.
std::vector<std::size_t> select_pruned_set(const ChannelStats& stats, float ratio);

struct SampledSides {
    Tensor target;
    Tensor retain;
};

/// Seeded draw without replacement of up to samples_per_side images from each side.
SampledSides sample_sides(const Partition& partition, const SelectionConfig& cfg);

/// Ranks every selected conv layer on samples drawn from the partition and attaches
/// rank-adaptive strengths.
PruningPlan build_pruning_plan(const Network& net, const Partition& partition, const SelectionConfig& cfg,
                               float lambda_floor);

} // namespace okp
