#include "okp/prune.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <utility>

namespace okp {

void PruningPlan::validate() const
{
    if (!(lambda_floor >= 0.0f && lambda_floor <= 1.0f)) {
        throw ConfigError("lambda_floor must lie in [0,1], got " + std::to_string(lambda_floor));
    }
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (!(e.strength >= lambda_floor && e.strength <= 1.0f)) {
            throw ConfigError("plan entry " + std::to_string(i) + ": strength " + std::to_string(e.strength)
                              + " outside [lambda_floor, 1]");
        }
        if (!seen.insert({e.layer, e.filter}).second) {
            throw ConfigError("plan entry " + std::to_string(i) + ": duplicate (layer " + std::to_string(e.layer)
                              + ", filter " + std::to_string(e.filter) + ")");
        }
        if (i > 0) {
            const auto& prev = entries[i - 1];
            if (e.layer < prev.layer) {
                throw ConfigError("plan entry " + std::to_string(i) + ": entries must be grouped by ascending layer");
            }
            if (e.layer == prev.layer && e.strength > prev.strength) {
                throw ConfigError("plan entry " + std::to_string(i) + ": strengths must be nonincreasing in rank");
            }
        }
    }
}

nlohmann::json plan_to_json(const PruningPlan& plan)
{
    auto rows = nlohmann::json::array();
    for (const auto& e : plan.entries) {
        rows.push_back({{"layer", e.layer}, {"filter", e.filter}, {"diff", e.diff}, {"strength", e.strength}});
    }
    return {{"lambda_floor", plan.lambda_floor}, {"entries", std::move(rows)}};
}

PruningPlan plan_from_json(const nlohmann::json& j)
{
    try {
        PruningPlan plan;
        plan.lambda_floor = j.at("lambda_floor").get<float>();
        for (const auto& r : j.at("entries")) {
            plan.entries.push_back({r.at("layer").get<std::size_t>(), r.at("filter").get<std::size_t>(),
                                    r.at("strength").get<float>(), r.value("diff", 0.0f)});
        }
        plan.validate();
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("plan JSON: ") + e.what());
    }
}

std::vector<float> pruning_strengths(std::size_t n_p, float lambda_floor)
{
    if (n_p < 1) {
        throw ConfigError("pruning_strengths: n_p must be >= 1");
    }
    if (!(lambda_floor >= 0.0f && lambda_floor <= 1.0f)) {
        throw ConfigError("lambda_floor must lie in [0,1], got " + std::to_string(lambda_floor));
    }
    std::vector<float> out;
    out.reserve(n_p);
    for (std::size_t k = 1; k <= n_p; ++k) {
        const double ramp = 1.0 - static_cast<double>(k) / static_cast<double>(n_p);
        out.push_back(static_cast<float>(std::max(static_cast<double>(lambda_floor), ramp)));
    }
    return out;
}

double apply_soft_prune(Network& net, const PruningPlan& plan)
{
    for (const auto& e : plan.entries) {
        if (e.layer >= net.conv_layer_count()) {
            throw ConfigError("plan references conv layer " + std::to_string(e.layer) + ", network has "
                              + std::to_string(net.conv_layer_count()));
        }
        const auto c_out = net.conv_layer(e.layer).weight.value.extent(0);
        if (e.filter >= c_out) {
            throw ConfigError("plan references filter " + std::to_string(e.filter) + " of conv layer "
                              + std::to_string(e.layer) + ", which has " + std::to_string(c_out));
        }
        if (!(e.strength >= 0.0f && e.strength <= 1.0f)) {
            throw ConfigError("plan strength " + std::to_string(e.strength) + " outside [0,1]");
        }
    }

    const auto start = std::chrono::steady_clock::now();
    for (const auto& e : plan.entries) {
        auto& layer = net.conv_layer(e.layer);
        const float factor = 1.0f - e.strength;
        const std::size_t slice = layer.weight.value.size() / layer.weight.value.extent(0);
        auto w = layer.weight.value.data().subspan(e.filter * slice, slice);
        for (auto& v : w) {
            v *= factor;
        }
        layer.bias.value[e.filter] *= factor;
    }
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

TrainResult fine_tune(Network& net, const LabeledDataset& retain, const TrainConfig& tcfg, const OrthoConfig& ocfg)
{
    if (tcfg.epochs == 0) {
        return {};
    }
    return train(net, retain, tcfg, ocfg);
}

} // namespace okp
