#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "okp/tensor.hpp"

namespace okp {

/// Images [N,C,H,W] in [0,1] with integer labels in [0, class_count).
struct LabeledDataset {
    Tensor images;
    std::vector<int> labels;
    std::size_t class_count = 0;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    [[nodiscard]] Shape sample_shape() const { return {images.extent(1), images.extent(2), images.extent(3)}; }

    /// Throws ConfigError if any invariant is violated.
    void validate() const;

    [[nodiscard]] Tensor batch(std::span<const std::size_t> indices) const;
    [[nodiscard]] std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
    [[nodiscard]] LabeledDataset subset(std::span<const std::size_t> indices) const;
    [[nodiscard]] std::vector<std::size_t> class_counts() const;
};

LabeledDataset make_dataset(Tensor images, std::vector<int> labels, std::size_t class_count);

struct Partition {
    LabeledDataset forget; // samples whose label is in forget_classes
    LabeledDataset retain; // the complement
    std::vector<int> forget_classes;
};

/// Splits by label, preserving source order on each side. `forget_classes` must be
/// a nonempty strict subset of the class range and both sides must be nonempty.
Partition partition(const LabeledDataset& dataset, std::vector<int> forget_classes);

inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * 32 * 32;

/// Decodes one CIFAR-10 binary batch held in memory.
LabeledDataset decode_cifar10(std::span<const std::uint8_t> bytes);
LabeledDataset load_cifar10(const std::vector<std::filesystem::path>& paths);

/// Deterministic single-channel toy task. Every sample is a mid-grey canvas with
/// one jittered square patch near the centre; the patch carries a class-specific
/// texture (checkerboard, horizontal, vertical or diagonal stripes, ...) at a
/// random phase and a per-sample contrast in [0.05, 0.5]. Uniform noise of
/// amplitude 0.1 is added and pixels are clamped to [0,1]. Class-major order.
LabeledDataset synth_dataset(std::uint64_t seed, std::size_t class_count, std::size_t per_class, std::size_t side);

inline constexpr std::string_view kDatasetMagic = "OKDS";

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& dataset);
LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

} // namespace okp
