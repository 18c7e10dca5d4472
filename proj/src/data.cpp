#include "okp/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "okp/container.hpp"
#include "okp/rng.hpp"

namespace okp {

void LabeledDataset::validate() const
{
    if (labels.empty()) {
        throw ConfigError("dataset must contain at least one sample");
    }
    if (images.rank() != 4 || images.extent(0) != labels.size()) {
        throw ConfigError("dataset images must be [N,C,H,W] with N = label count (" + std::to_string(labels.size())
                          + "), got " + shape_to_string(images.shape()));
    }
    if (class_count < 2) {
        throw ConfigError("dataset class_count must be >= 2");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
            throw ConfigError("label " + std::to_string(labels[i]) + " at sample " + std::to_string(i)
                              + " outside [0," + std::to_string(class_count) + ")");
        }
    }
    for (float v : images.data()) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw ConfigError("image values must lie in [0,1]");
        }
    }
}

Tensor LabeledDataset::batch(std::span<const std::size_t> indices) const
{
    if (indices.empty()) {
        throw ConfigError("cannot build an empty batch");
    }
    const auto shape = sample_shape();
    const std::size_t stride = shape_volume(shape);
    Tensor out({indices.size(), shape[0], shape[1], shape[2]});
    for (std::size_t b = 0; b < indices.size(); ++b) {
        if (indices[b] >= size()) {
            throw ConfigError("sample index " + std::to_string(indices[b]) + " out of range");
        }
        std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(indices[b] * stride), stride,
                    out.data().begin() + static_cast<std::ptrdiff_t>(b * stride));
    }
    return out;
}

std::vector<int> LabeledDataset::batch_labels(std::span<const std::size_t> indices) const
{
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) {
        out.push_back(labels.at(i));
    }
    return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const
{
    return LabeledDataset{batch(indices), batch_labels(indices), class_count};
}

std::vector<std::size_t> LabeledDataset::class_counts() const
{
    std::vector<std::size_t> counts(class_count, 0);
    for (int y : labels) {
        ++counts[static_cast<std::size_t>(y)];
    }
    return counts;
}

LabeledDataset make_dataset(Tensor images, std::vector<int> labels, std::size_t class_count)
{
    LabeledDataset ds{std::move(images), std::move(labels), class_count};
    ds.validate();
    return ds;
}

Partition partition(const LabeledDataset& dataset, std::vector<int> forget_classes)
{
    std::sort(forget_classes.begin(), forget_classes.end());
    forget_classes.erase(std::unique(forget_classes.begin(), forget_classes.end()), forget_classes.end());
    if (forget_classes.empty()) {
        throw ConfigError("forget_classes must be nonempty");
    }
    if (forget_classes.size() >= dataset.class_count) {
        throw ConfigError("forget_classes must be a strict subset of the " + std::to_string(dataset.class_count)
                          + " classes");
    }
    for (int c : forget_classes) {
        if (c < 0 || static_cast<std::size_t>(c) >= dataset.class_count) {
            throw ConfigError("forget class " + std::to_string(c) + " outside [0,"
                              + std::to_string(dataset.class_count) + ")");
        }
    }
    std::vector<std::size_t> forget_idx;
    std::vector<std::size_t> retain_idx;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const bool f = std::binary_search(forget_classes.begin(), forget_classes.end(), dataset.labels[i]);
        (f ? forget_idx : retain_idx).push_back(i);
    }
    if (forget_idx.empty() || retain_idx.empty()) {
        throw ConfigError("partition leaves the " + std::string(forget_idx.empty() ? "forget" : "retain")
                          + " side empty");
    }
    return Partition{dataset.subset(forget_idx), dataset.subset(retain_idx), std::move(forget_classes)};
}

LabeledDataset decode_cifar10(std::span<const std::uint8_t> bytes)
{
    using Kind = FormatError::Kind;
    if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
        const std::size_t partial = bytes.size() / kCifarRecordBytes;
        throw FormatError(Kind::truncated, "CIFAR-10 batch length " + std::to_string(bytes.size())
                                               + " is not a positive multiple of 3073 (record "
                                               + std::to_string(partial) + " incomplete)");
    }
    const std::size_t n = bytes.size() / kCifarRecordBytes;
    Tensor images({n, 3, 32, 32});
    std::vector<int> labels(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
        if (rec[0] >= 10) {
            throw FormatError(Kind::bad_record, "CIFAR-10 record " + std::to_string(r) + " has label byte "
                                                    + std::to_string(rec[0]));
        }
        labels[r] = rec[0];
        float* dst = images.data().data() + r * 3072;
        for (std::size_t p = 0; p < 3072; ++p) {
            dst[p] = static_cast<float>(rec[1 + p]) / 255.0f;
        }
    }
    return LabeledDataset{std::move(images), std::move(labels), 10};
}

LabeledDataset load_cifar10(const std::vector<std::filesystem::path>& paths)
{
    if (paths.empty()) {
        throw ConfigError("no CIFAR-10 files given");
    }
    std::vector<float> pixels;
    std::vector<int> labels;
    for (const auto& path : paths) {
        auto part = decode_cifar10(read_file(path));
        pixels.insert(pixels.end(), part.images.data().begin(), part.images.data().end());
        labels.insert(labels.end(), part.labels.begin(), part.labels.end());
    }
    const std::size_t n = labels.size();
    return LabeledDataset{Tensor({n, 3, 32, 32}, std::move(pixels)), std::move(labels), 10};
}

namespace {

// Class c uses texture kind c % 5 with a period that grows every five classes.
// value 1 means the pixel is on the bright half of the pattern.
bool texture_on(std::size_t cls, long y, long x, long phase)
{
    const long round = static_cast<long>(cls / 5);
    const long per = 4 + 2 * round;
    long v = 0;
    switch (cls % 5) {
    case 0: {
        const long cell = 2 + round;
        return ((y + phase) / cell + (x + phase) / cell) % 2 == 0;
    }
    case 1: v = y; break;
    case 2: v = x; break;
    case 3: v = x + y; break;
    default: v = x - y; break;
    }
    v = ((v + phase) % per + per) % per;
    return v < per / 2;
}

} // namespace

LabeledDataset synth_dataset(std::uint64_t seed, std::size_t class_count, std::size_t per_class, std::size_t side)
{
    if (class_count < 2) {
        throw ConfigError("synth_dataset: class_count must be >= 2");
    }
    if (side < 8) {
        throw ConfigError("synth_dataset: side must be >= 8");
    }
    if (per_class < 1) {
        throw ConfigError("synth_dataset: per_class must be >= 1");
    }
    constexpr double background = 0.5;
    constexpr double contrast_lo = 0.05;
    constexpr double contrast_hi = 0.5;
    constexpr double noise = 0.1;
    const std::size_t patch = std::max<std::size_t>(4, side * 10 / 28);
    const std::size_t jitter = std::min<std::size_t>(2, (side - patch) / 2);
    const std::size_t base = (side - patch) / 2 - jitter;

    const std::size_t n = class_count * per_class;
    Tensor images({n, 1, side, side});
    std::vector<int> labels(n);
    Rng rng(seed);
    std::vector<double> canvas(side * side);
    for (std::size_t c = 0; c < class_count; ++c) {
        const long period = 4 + 2 * static_cast<long>(c / 5);
        for (std::size_t s = 0; s < per_class; ++s) {
            const std::size_t i = c * per_class + s;
            labels[i] = static_cast<int>(c);
            std::fill(canvas.begin(), canvas.end(), background);
            const std::size_t y0 = base + rng.below(2 * jitter + 1);
            const std::size_t x0 = base + rng.below(2 * jitter + 1);
            const long phase = static_cast<long>(rng.below(static_cast<std::uint64_t>(period)));
            const double a = rng.uniform(contrast_lo, contrast_hi);
            for (std::size_t y = y0; y < y0 + patch; ++y) {
                for (std::size_t x = x0; x < x0 + patch; ++x) {
                    const bool on = texture_on(c, static_cast<long>(y - y0), static_cast<long>(x - x0), phase);
                    canvas[y * side + x] = on ? background + a : background - a;
                }
            }
            float* img = images.data().data() + i * side * side;
            for (std::size_t p = 0; p < side * side; ++p) {
                img[p] = static_cast<float>(std::clamp(canvas[p] + rng.uniform(-noise, noise), 0.0, 1.0));
            }
        }
    }
    return LabeledDataset{std::move(images), std::move(labels), class_count};
}

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& dataset)
{
    std::vector<float> labels(dataset.labels.begin(), dataset.labels.end());
    nlohmann::json header = {{"format", "okp-dataset"}, {"class_count", dataset.class_count}};
    return encode_container(kDatasetMagic, std::move(header),
                            {{"images", dataset.images.shape(), dataset.images.data()},
                             {"labels", {labels.size()}, labels}});
}

LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes)
{
    using Kind = FormatError::Kind;
    auto decoded = decode_container(kDatasetMagic, bytes);
    if (decoded.buffers.size() != 2 || decoded.buffers[0].shape.size() != 4
        || decoded.buffers[1].shape.size() != 1) {
        throw FormatError(Kind::architecture_mismatch, "dataset dump must hold images [N,C,H,W] and labels [N]");
    }
    std::vector<int> labels;
    for (float f : decoded.buffers[1].data) {
        labels.push_back(static_cast<int>(f));
    }
    try {
        return make_dataset(Tensor(decoded.buffers[0].shape, std::move(decoded.buffers[0].data)), std::move(labels),
                            decoded.header.at("class_count").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(Kind::bad_header, std::string("dataset header: ") + e.what());
    }
}

void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& path)
{
    write_file(path, encode_dataset(dataset));
}

LabeledDataset load_dataset(const std::filesystem::path& path)
{
    return decode_dataset(read_file(path));
}

} // namespace okp
