#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "okp/channels.hpp"
#include "oracles.hpp"

using okp::LayerSpec;
using testing_util::random_tensor;

namespace {

okp::NetworkSpec one_conv(std::size_t filters, std::size_t side)
{
    return {{1, side, side}, 2, {LayerSpec::conv(filters, 3, 1, 0), LayerSpec::relu(), LayerSpec::flatten(),
                                 LayerSpec::dense(2)}};
}

okp::ChannelStats stats_from_diffs(const std::vector<float>& diffs)
{
    okp::ChannelStats s;
    for (std::size_t j = 0; j < diffs.size(); ++j) {
        s.records.push_back({j, diffs[j], 0.0f, diffs[j]});
    }
    return s;
}

okp::Tensor rows_of(const okp::Tensor& batch, const std::vector<std::size_t>& order)
{
    const std::size_t stride = batch.size() / batch.extent(0);
    std::vector<float> out;
    for (auto r : order) {
        auto row = batch.data().subspan(r * stride, stride);
        out.insert(out.end(), row.begin(), row.end());
    }
    okp::Shape shape = batch.shape();
    shape[0] = order.size();
    return okp::Tensor(shape, out);
}

okp::Partition desk_partition()
{
    return okp::partition(okp::synth_dataset(0, 4, 12, 28), {0});
}

} // namespace

TEST(ActivationStats, IdenticalBatchesGiveZeroDiff)
{
    auto net = okp::Network::build(okp::desk_spec(4), 1);
    std::mt19937_64 gen(1);
    const auto batch = random_tensor<float>(gen, {3, 1, 28, 28}, 0.0, 1.0);
    for (std::size_t l = 0; l < 2; ++l) {
        const auto stats = okp::activation_stats(net, batch, batch, l);
        EXPECT_EQ(stats.layer, l);
        ASSERT_EQ(stats.records.size(), l == 0 ? 8u : 16u);
        for (const auto& r : stats.records) {
            EXPECT_EQ(r.diff, 0.0f);
        }
    }
}

TEST(ActivationStats, SingleSampleMatchesComposedOracle)
{
    auto net = okp::Network::build(one_conv(1, 4), 3);
    net.conv_layer(0).bias.value[0] = 0.05f;
    std::mt19937_64 gen(2);
    const auto target = random_tensor<float>(gen, {1, 1, 4, 4}, 0.0, 1.0);
    const auto retain = random_tensor<float>(gen, {1, 1, 4, 4}, 0.0, 1.0);
    const auto wt = testing_util::to_array4(net.conv_layer(0).weight.value);
    auto spatial_max = [&](const okp::Tensor& x) {
        const auto map = oracle::conv2d(testing_util::to_array4(x), wt, {0.05}, 1, 0);
        double best = 0.0;
        for (double v : map.v) {
            best = std::max(best, std::max(0.0, v));
        }
        return best;
    };
    const auto stats = okp::activation_stats(net, target, retain, 0);
    ASSERT_EQ(stats.records.size(), 1u);
    const auto& r = stats.records[0];
    EXPECT_NEAR(r.a_target, spatial_max(target), 1e-6);
    EXPECT_NEAR(r.a_retain, spatial_max(retain), 1e-6);
    EXPECT_EQ(r.diff, r.a_target - r.a_retain);
}

TEST(ActivationStats, MatchedFilterFavoursTargetPattern)
{
    auto net = okp::Network::build(one_conv(2, 8), 4);
    auto& w = net.conv_layer(0).weight.value;
    for (std::size_t y = 0; y < 3; ++y) {
        for (std::size_t x = 0; x < 3; ++x) {
            w.at({0, 0, y, x}) = (y + x) % 2 == 0 ? 1.0f : -1.0f;
        }
    }
    net.conv_layer(0).bias.value[0] = 0.0f;
    okp::Tensor target({4, 1, 8, 8});
    for (std::size_t s = 0; s < 4; ++s) {
        for (std::size_t y = 0; y < 8; ++y) {
            for (std::size_t x = 0; x < 8; ++x) {
                target.at({s, 0, y, x}) = (y + x + s) % 2 == 0 ? 1.0f : 0.0f;
            }
        }
    }
    std::mt19937_64 gen(5);
    const auto retain = random_tensor<float>(gen, {16, 1, 8, 8}, 0.0, 1.0);
    const auto stats = okp::activation_stats(net, target, retain, 0);
    EXPECT_FLOAT_EQ(stats.records[0].a_target, 5.0f);
    EXPECT_GT(stats.records[0].diff, 0.0f);
}

TEST(ActivationStats, PermutationWithinSideInvariant)
{
    auto net = okp::Network::build(okp::desk_spec(4), 6);
    std::mt19937_64 gen(6);
    const auto target = random_tensor<float>(gen, {7, 1, 28, 28}, 0.0, 1.0);
    const auto retain = random_tensor<float>(gen, {5, 1, 28, 28}, 0.0, 1.0);
    const auto a = okp::activation_stats(net, target, retain, 1);
    const auto b = okp::activation_stats(net, rows_of(target, {6, 2, 0, 5, 1, 4, 3}), rows_of(retain, {4, 3, 2, 1, 0}),
                                         1);
    EXPECT_EQ(okp::activation_stats(net, target, retain, 1), a);
    for (std::size_t j = 0; j < a.records.size(); ++j) {
        EXPECT_NEAR(a.records[j].a_target, b.records[j].a_target, 1e-6);
        EXPECT_NEAR(a.records[j].a_retain, b.records[j].a_retain, 1e-6);
        EXPECT_NEAR(a.records[j].diff, b.records[j].diff, 1e-6);
    }
}

TEST(ActivationStats, ConstantBiasShiftLeavesDiff)
{
    auto net = okp::Network::build(one_conv(3, 6), 7);
    for (auto& v : net.conv_layer(0).weight.value.data()) {
        v = std::abs(v);
    }
    for (auto& b : net.conv_layer(0).bias.value.data()) {
        b = 0.1f;
    }
    std::mt19937_64 gen(7);
    const auto target = random_tensor<float>(gen, {4, 1, 6, 6}, 0.0, 1.0);
    const auto retain = random_tensor<float>(gen, {4, 1, 6, 6}, 0.0, 1.0);
    const auto before = okp::activation_stats(net, target, retain, 0);
    net.conv_layer(0).bias.value[1] += 0.5f;
    const auto after = okp::activation_stats(net, target, retain, 0);
    EXPECT_GT(after.records[1].a_target, before.records[1].a_target);
    EXPECT_GT(after.records[1].a_retain, before.records[1].a_retain);
    EXPECT_NEAR(after.records[1].diff, before.records[1].diff, 1e-5);
}

TEST(ActivationStats, RejectsEmptyBatchAndNonConvLayer)
{
    auto net = okp::Network::build(okp::desk_spec(4), 0);
    okp::Tensor batch({1, 1, 28, 28});
    EXPECT_THROW(okp::activation_stats(net, batch, batch, 2), okp::ConfigError);
}

TEST(SelectPrunedSet, TopTwoOfFive)
{
    EXPECT_EQ(okp::select_pruned_set(stats_from_diffs({5, 4, 3, 2, 1}), 0.4f), (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(okp::select_pruned_set(stats_from_diffs({1, 2, 3, 4, 5}), 0.4f), (std::vector<std::size_t>{4, 3}));
}

TEST(SelectPrunedSet, TwoOfOneHundred)
{
    std::mt19937_64 gen(8);
    std::vector<float> diffs(100);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (auto& d : diffs) {
        d = u(gen);
    }
    const auto chosen = okp::select_pruned_set(stats_from_diffs(diffs), 0.02f);
    ASSERT_EQ(chosen.size(), 2u);
    std::vector<float> sorted = diffs;
    std::sort(sorted.rbegin(), sorted.rend());
    EXPECT_EQ(diffs[chosen[0]], sorted[0]);
    EXPECT_EQ(diffs[chosen[1]], sorted[1]);
}

TEST(SelectPrunedSet, TiesGoToSmallerIndex)
{
    EXPECT_EQ(okp::select_pruned_set(stats_from_diffs({3, 3, 3, 1}), 0.25f), (std::vector<std::size_t>{0}));
    EXPECT_EQ(okp::select_pruned_set(stats_from_diffs({1, 3, 2, 3}), 0.5f), (std::vector<std::size_t>{1, 3}));
}

TEST(SelectPrunedSet, SelectedDominateUnselected)
{
    std::mt19937_64 gen(9);
    std::uniform_int_distribution<int> u(-3, 3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 1 + gen() % 40;
        std::vector<float> diffs(c);
        for (auto& d : diffs) {
            d = static_cast<float>(u(gen));
        }
        const float ratio = static_cast<float>(1 + gen() % 100) / 100.0f;
        const auto chosen = okp::select_pruned_set(stats_from_diffs(diffs), ratio);
        const auto expected = static_cast<std::size_t>(std::ceil(static_cast<double>(ratio) * c - 1e-6));
        EXPECT_EQ(chosen.size(), std::clamp<std::size_t>(expected, 1, c));
        std::vector<bool> in(c, false);
        for (auto j : chosen) {
            in[j] = true;
        }
        for (auto j : chosen) {
            for (std::size_t k = 0; k < c; ++k) {
                if (!in[k]) {
                    EXPECT_GE(diffs[j], diffs[k]);
                }
            }
        }
    }
}

TEST(PrunedCount, RatioArithmetic)
{
    EXPECT_EQ(okp::pruned_count(0.25f, 8), 2u);
    EXPECT_EQ(okp::pruned_count(0.25f, 16), 4u);
    EXPECT_EQ(okp::pruned_count(0.15f, 20), 3u);
    EXPECT_EQ(okp::pruned_count(0.01f, 8), 1u);
    EXPECT_EQ(okp::pruned_count(1.0f, 8), 8u);
    EXPECT_THROW(okp::pruned_count(0.0f, 8), okp::ConfigError);
    EXPECT_THROW(okp::pruned_count(1.5f, 8), okp::ConfigError);
}

TEST(PruningPlan, DeskNetCoversBothLayers)
{
    const auto net = okp::Network::build(okp::desk_spec(4), 10);
    okp::SelectionConfig cfg;
    cfg.ratio = 0.25f;
    cfg.samples_per_side = 5;
    const auto plan = okp::build_pruning_plan(net, desk_partition(), cfg, 0.4f);
    ASSERT_EQ(plan.entries.size(), 6u);
    EXPECT_EQ(std::count_if(plan.entries.begin(), plan.entries.end(), [](auto& e) { return e.layer == 0; }), 2);
    EXPECT_EQ(std::count_if(plan.entries.begin(), plan.entries.end(), [](auto& e) { return e.layer == 1; }), 4);
    EXPECT_EQ(plan.entries[0].strength, 0.5f);
    EXPECT_EQ(plan.entries[1].strength, 0.4f);
    EXPECT_EQ(plan.entries[2].strength, 0.75f);
    EXPECT_GE(plan.entries[0].diff, plan.entries[1].diff);
}

TEST(PruningPlan, SingleSamplePerSideStillPlans)
{
    const auto net = okp::Network::build(okp::desk_spec(4), 11);
    okp::SelectionConfig cfg;
    cfg.samples_per_side = 1;
    const auto plan = okp::build_pruning_plan(net, desk_partition(), cfg, 0.2f);
    EXPECT_EQ(plan.entries.size(), 6u);
    EXPECT_NO_THROW(plan.validate());
}

TEST(PruningPlan, SameSeedSamePlan)
{
    const auto net = okp::Network::build(okp::desk_spec(4), 12);
    const auto part = desk_partition();
    okp::SelectionConfig cfg;
    cfg.samples_per_side = 3;
    cfg.seed = 4;
    EXPECT_EQ(okp::build_pruning_plan(net, part, cfg, 0.4f), okp::build_pruning_plan(net, part, cfg, 0.4f));
}

TEST(PruningPlan, BudgetLargerThanSideUsesAll)
{
    const auto net = okp::Network::build(okp::desk_spec(4), 13);
    const auto part = desk_partition();
    okp::SelectionConfig cfg;
    cfg.samples_per_side = 1000;
    cfg.layers = {0};
    const auto plan = okp::build_pruning_plan(net, part, cfg, 0.4f);
    std::vector<std::size_t> all_f(part.forget.size());
    std::vector<std::size_t> all_r(part.retain.size());
    std::iota(all_f.begin(), all_f.end(), std::size_t{0});
    std::iota(all_r.begin(), all_r.end(), std::size_t{0});
    const auto stats = okp::activation_stats(net, part.forget.batch(all_f), part.retain.batch(all_r), 0);
    const auto chosen = okp::select_pruned_set(stats, cfg.ratio);
    ASSERT_EQ(plan.entries.size(), chosen.size());
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        EXPECT_EQ(plan.entries[k].filter, chosen[k]);
        EXPECT_NEAR(plan.entries[k].diff, stats.records[chosen[k]].diff, 1e-6);
    }
}

TEST(SelectionConfig, Validation)
{
    okp::SelectionConfig cfg;
    cfg.ratio = 0.0f;
    EXPECT_THROW(cfg.validate(), okp::ConfigError);
    cfg.ratio = 0.5f;
    cfg.samples_per_side = 0;
    EXPECT_THROW(cfg.validate(), okp::ConfigError);
}
