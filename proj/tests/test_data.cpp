#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <utility>

#include "okp/container.hpp"
#include "okp/data.hpp"

using Kind = okp::FormatError::Kind;

namespace {

std::vector<std::uint8_t> cifar_record(std::uint8_t label, std::uint8_t fill)
{
    std::vector<std::uint8_t> rec(okp::kCifarRecordBytes, fill);
    rec[0] = label;
    return rec;
}

Kind cifar_failure(const std::vector<std::uint8_t>& bytes, std::string* message = nullptr)
{
    try {
        (void)okp::decode_cifar10(bytes);
    } catch (const okp::FormatError& e) {
        if (message) {
            *message = e.what();
        }
        return e.kind();
    }
    ADD_FAILURE() << "decode unexpectedly succeeded";
    return Kind::bad_magic;
}

okp::LabeledDataset balanced(std::size_t classes, std::size_t per_class)
{
    const std::size_t n = classes * per_class;
    okp::Tensor images({n, 1, 2, 2});
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(i % classes);
        for (std::size_t p = 0; p < 4; ++p) {
            images.data()[i * 4 + p] = static_cast<float>(i) / static_cast<float>(n);
        }
    }
    return okp::make_dataset(std::move(images), std::move(labels), classes);
}

} // namespace

TEST(Cifar, TwoRecordFileDecodesExactly)
{
    std::vector<std::uint8_t> bytes;
    for (std::size_t r = 0; r < 2; ++r) {
        auto rec = cifar_record(static_cast<std::uint8_t>(3 + 4 * r), 0);
        for (std::size_t p = 0; p < 3072; ++p) {
            rec[1 + p] = static_cast<std::uint8_t>((p * 7 + r * 13) % 256);
        }
        bytes.insert(bytes.end(), rec.begin(), rec.end());
    }
    const auto ds = okp::decode_cifar10(bytes);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.class_count, 10u);
    EXPECT_EQ(ds.labels, (std::vector<int>{3, 7}));
    EXPECT_EQ(ds.images.shape(), (okp::Shape{2, 3, 32, 32}));
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t ch = 0; ch < 3; ++ch) {
            for (std::size_t y = 0; y < 32; ++y) {
                for (std::size_t x = 0; x < 32; ++x) {
                    const std::size_t p = ch * 1024 + y * 32 + x;
                    const float expected = static_cast<float>((p * 7 + r * 13) % 256) / 255.0f;
                    ASSERT_EQ(ds.images.at({r, ch, y, x}), expected);
                }
            }
        }
    }
}

TEST(Cifar, AllMaxPixelsNormaliseToOne)
{
    const auto ds = okp::decode_cifar10(cifar_record(0, 255));
    for (float v : ds.images.data()) {
        EXPECT_EQ(v, 1.0f);
    }
}

TEST(Cifar, MissingLabelByteRejected)
{
    std::string message;
    EXPECT_EQ(cifar_failure(std::vector<std::uint8_t>(3072, 0), &message), Kind::truncated);
    EXPECT_NE(message.find("record 0"), std::string::npos) << message;
    EXPECT_EQ(cifar_failure({}), Kind::truncated);
}

TEST(Cifar, LabelOutOfRangeReportsRecord)
{
    auto bytes = cifar_record(1, 0);
    const auto bad = cifar_record(10, 0);
    bytes.insert(bytes.end(), bad.begin(), bad.end());
    std::string message;
    EXPECT_EQ(cifar_failure(bytes, &message), Kind::bad_record);
    EXPECT_NE(message.find("record 1"), std::string::npos) << message;
}

TEST(Cifar, FilesConcatenateInOrder)
{
    const auto dir = std::filesystem::temp_directory_path() / "okp_cifar_concat";
    std::filesystem::create_directories(dir);
    okp::write_file(dir / "a.bin", cifar_record(5, 10));
    auto two = cifar_record(2, 20);
    const auto extra = cifar_record(9, 30);
    two.insert(two.end(), extra.begin(), extra.end());
    okp::write_file(dir / "b.bin", two);
    const auto ds = okp::load_cifar10({dir / "a.bin", dir / "b.bin"});
    EXPECT_EQ(ds.labels, (std::vector<int>{5, 2, 9}));
    EXPECT_EQ(ds.images.at({2, 2, 31, 31}), 30.0f / 255.0f);
    EXPECT_THROW((void)okp::load_cifar10({dir / "missing.bin"}), okp::IoError);
    std::filesystem::remove_all(dir);
}

TEST(Dataset, ValidateRejectsBrokenInvariants)
{
    EXPECT_THROW(okp::make_dataset(okp::Tensor({2, 1, 2, 2}), {0, 2}, 2), okp::ConfigError);
    EXPECT_THROW(okp::make_dataset(okp::Tensor({2, 1, 2, 2}), {0}, 2), okp::ConfigError);
    okp::Tensor bright({1, 1, 2, 2});
    bright[0] = 1.5f;
    EXPECT_THROW(okp::make_dataset(bright, {0}, 2), okp::ConfigError);
}

TEST(Partition, ForgetOneOfFour)
{
    const auto ds = balanced(4, 25);
    const auto p = okp::partition(ds, {0});
    EXPECT_EQ(p.forget.size(), 25u);
    EXPECT_EQ(p.retain.size(), 75u);
    for (int y : p.forget.labels) {
        EXPECT_EQ(y, 0);
    }
    for (int y : p.retain.labels) {
        EXPECT_NE(y, 0);
    }
    EXPECT_EQ(p.forget_classes, (std::vector<int>{0}));
}

TEST(Partition, ForgetTwoOfFourHalves)
{
    const auto ds = balanced(4, 25);
    const auto p = okp::partition(ds, {1, 0});
    EXPECT_EQ(p.forget.size(), 50u);
    EXPECT_EQ(p.retain.size(), 50u);
    EXPECT_EQ(p.forget_classes, (std::vector<int>{0, 1}));
}

TEST(Partition, EmptyOrFullForgetSetRejected)
{
    const auto ds = balanced(4, 5);
    EXPECT_THROW(okp::partition(ds, {}), okp::ConfigError);
    EXPECT_THROW(okp::partition(ds, {0, 1, 2, 3}), okp::ConfigError);
    EXPECT_THROW(okp::partition(ds, {4}), okp::ConfigError);
}

TEST(Partition, LosslessAndOrderPreserving)
{
    const auto ds = balanced(3, 7);
    const auto p = okp::partition(ds, {1});
    // Each image is constant and encodes its source index, so order can be read back.
    auto source_index = [&](const okp::LabeledDataset& side, std::size_t i) {
        return static_cast<std::size_t>(side.images.at({i, 0, 0, 0}) * static_cast<float>(ds.size()) + 0.5f);
    };
    std::map<std::size_t, int> seen;
    for (const auto* side : {&p.forget, &p.retain}) {
        std::size_t previous = 0;
        for (std::size_t i = 0; i < side->size(); ++i) {
            const std::size_t src = source_index(*side, i);
            if (i > 0) {
                EXPECT_GT(src, previous);
            }
            previous = src;
            EXPECT_EQ(side->labels[i], ds.labels[src]);
            ++seen[src];
        }
    }
    EXPECT_EQ(seen.size(), ds.size());
    for (const auto& [idx, count] : seen) {
        EXPECT_EQ(count, 1) << idx;
    }
}

TEST(Synth, SameArgumentsBitIdentical)
{
    const auto a = okp::synth_dataset(3, 4, 20, 28);
    const auto b = okp::synth_dataset(3, 4, 20, 28);
    EXPECT_EQ(a.images, b.images);
    EXPECT_EQ(a.labels, b.labels);
    const auto c = okp::synth_dataset(4, 4, 20, 28);
    EXPECT_FALSE(a.images == c.images);
}

TEST(Synth, ExactClassMajorCountsAndRange)
{
    const auto ds = okp::synth_dataset(0, 5, 13, 16);
    ds.validate();
    EXPECT_EQ(ds.images.shape(), (okp::Shape{65, 1, 16, 16}));
    EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>(5, 13)));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(ds.labels[i], static_cast<int>(i / 13));
    }
}

// Per-class mean absolute pixel step along x and along y inside the central patch.
static std::pair<double, double> mean_steps(const okp::LabeledDataset& ds, int cls)
{
    const std::size_t side = ds.images.extent(3);
    double dx = 0.0;
    double dy = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] != cls) {
            continue;
        }
        const float* img = ds.images.data().data() + i * side * side;
        for (std::size_t y = 11; y < 17; ++y) {
            for (std::size_t x = 11; x < 17; ++x) {
                dx += std::abs(img[y * side + x + 1] - img[y * side + x]);
                dy += std::abs(img[(y + 1) * side + x] - img[y * side + x]);
                ++n;
            }
        }
    }
    return {dx / static_cast<double>(n), dy / static_cast<double>(n)};
}

TEST(Synth, ClassesDifferInsideThePatch)
{
    const auto ds = okp::synth_dataset(0, 4, 100, 28);
    const auto [h_dx, h_dy] = mean_steps(ds, 1); // horizontal stripes: rows constant
    const auto [v_dx, v_dy] = mean_steps(ds, 2); // vertical stripes: columns constant
    EXPECT_GT(h_dy, 2.0 * h_dx);
    EXPECT_GT(v_dx, 2.0 * v_dy);
    // Outside the patch only noise remains, identical in law for every class.
    double corner = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        corner += ds.images[i * 28 * 28];
    }
    EXPECT_NEAR(corner / static_cast<double>(ds.size()), 0.5, 0.02);
}

TEST(Synth, EverySideFromEightUp)
{
    for (std::size_t side = 8; side <= 32; ++side) {
        const auto ds = okp::synth_dataset(side, 3, 2, side);
        ds.validate();
        for (float v : ds.images.data()) {
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
        }
    }
}

TEST(Synth, PreconditionsEnforced)
{
    EXPECT_THROW(okp::synth_dataset(0, 1, 10, 28), okp::ConfigError);
    EXPECT_THROW(okp::synth_dataset(0, 4, 10, 7), okp::ConfigError);
}

TEST(DatasetDump, RoundTripsThroughContainer)
{
    const auto ds = okp::synth_dataset(9, 3, 4, 12);
    const auto bytes = okp::encode_dataset(ds);
    ASSERT_GE(bytes.size(), 4u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "OKDS");
    const auto back = okp::decode_dataset(bytes);
    EXPECT_EQ(back.images, ds.images);
    EXPECT_EQ(back.labels, ds.labels);
    EXPECT_EQ(back.class_count, ds.class_count);
    EXPECT_EQ(okp::encode_dataset(back), bytes);

    auto wrong = bytes;
    wrong[0] = 'X';
    EXPECT_THROW((void)okp::decode_dataset(wrong), okp::FormatError);
}
