#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "okp/data.hpp"
#include "okp/network.hpp"
#include "okp/ortho.hpp"

namespace okp {

struct PlanEntry {
    std::size_t layer = 0;  // conv layer index
    std::size_t filter = 0; // output channel
    float strength = 0.0f;  // S_k; the filter is scaled by (1 - S_k)
    float diff = 0.0f;      // activation difference that ranked it

    friend bool operator==(const PlanEntry&, const PlanEntry&) = default;
};

/// Entries ordered by layer, then by rank (strongest class affinity first).
struct PruningPlan {
    std::vector<PlanEntry> entries;
    float lambda_floor = 0.0f;

    /// Strengths nonincreasing within a layer, each in [lambda_floor, 1], no duplicate (layer, filter).
    void validate() const;

    friend bool operator==(const PruningPlan&, const PruningPlan&) = default;
};

nlohmann::json plan_to_json(const PruningPlan& plan);
PruningPlan plan_from_json(const nlohmann::json& j);

/// S_k = max(lambda_floor, 1 - k/n_p) for k = 1..n_p.
std::vector<float> pruning_strengths(std::size_t n_p, float lambda_floor);

/// Scales each listed filter's weight slice and bias entry by (1 - S_k). All
/// indices are checked before anything is touched. Returns the wall-clock
/// seconds spent mutating.
double apply_soft_prune(Network& net, const PruningPlan& plan);

/// SGD on the retained data only, orthogonality term kept active. Zero epochs is a no-op.
TrainResult fine_tune(Network& net, const LabeledDataset& retain, const TrainConfig& tcfg, const OrthoConfig& ocfg);

} // namespace okp
