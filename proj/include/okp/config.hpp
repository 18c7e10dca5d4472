#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "okp/channels.hpp"
#include "okp/data.hpp"
#include "okp/eval.hpp"
#include "okp/network.hpp"
#include "okp/ortho.hpp"

namespace okp {

struct SynthSource {
    std::uint64_t train_seed = 0;
    std::uint64_t test_seed = 1;
    std::size_t class_count = 4;
    std::size_t per_class = 500;
    std::size_t test_per_class = 300;
    std::size_t side = 28;
};

struct CifarSource {
    std::vector<std::filesystem::path> train_files;
    std::vector<std::filesystem::path> test_files;
};

struct DatasetSource {
    std::optional<SynthSource> synth; // exactly one of synth / cifar10
    std::optional<CifarSource> cifar10;
};

struct FineTuneConfig {
    bool enabled = false;
    std::size_t epochs = 3;
};

struct SweepConfig {
    std::vector<float> ratios{0.05f, 0.1f, 0.15f, 0.2f, 0.25f};
    std::vector<float> strengths{1.0f, 0.8f, 0.6f, 0.4f, 0.2f};
};

/// Everything a pipeline run depends on. `seed` feeds network initialisation,
/// batch order, the statistics draw and the attack split.
struct RunConfig {
    DatasetSource dataset;
    std::optional<NetworkSpec> architecture; // default: desk_spec for the dataset
    TrainConfig train;
    OrthoConfig ortho;
    SelectionConfig selection;
    float lambda_floor = 0.4f;
    std::vector<int> forget_classes{0};
    FineTuneConfig fine_tune;
    MiaProtocol mia;
    SweepConfig sweep;
    std::size_t stats_layer = 0;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "okp-out";

    /// Spreads `seed` into the sub-configs that carry one.
    void apply_seed(std::uint64_t s);

    /// Every sub-config invariant plus forget-class and sweep-domain checks.
    void validate() const;

    [[nodiscard]] std::size_t class_count() const;
    [[nodiscard]] NetworkSpec network_spec() const;
};

/// Unknown keys are rejected; messages name the offending field path.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

struct LoadedData {
    LabeledDataset train;
    LabeledDataset test;
};

LoadedData load_data(const RunConfig& cfg);

} // namespace okp
