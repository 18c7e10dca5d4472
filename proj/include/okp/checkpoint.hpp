#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "okp/network.hpp"

namespace okp {

inline constexpr std::string_view kCheckpointMagic = "OKPF";

struct TrainingMeta {
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    double lambda_ortho = 0.0;
    nlohmann::json extra = nlohmann::json::object();

    friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct Checkpoint {
    Network network;
    TrainingMeta meta;
};

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

std::vector<std::uint8_t> encode_checkpoint(const Network& net, const TrainingMeta& meta);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Network& net, const TrainingMeta& meta, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace okp
