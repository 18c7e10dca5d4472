#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "helpers.hpp"
#include "okp/eval.hpp"
#include "okp/ortho.hpp"
#include "oracles.hpp"

using okp::Tensor64;
using testing_util::random_tensor;

namespace {

Tensor64 matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
{
    return Tensor64({rows, cols}, std::move(values));
}

std::vector<double> numeric_ortho_grad(const Tensor64& wm, double step)
{
    std::vector<double> x(wm.data().begin(), wm.data().end());
    return oracle::numeric_gradient(
        [&](const std::vector<double>& v) {
            return oracle::gram_deviation_norm(v, wm.extent(0), wm.extent(1));
        },
        x, step);
}

} // namespace

TEST(ReshapeKernels, FourThreeByThreeBecomesFourByNine)
{
    okp::Tensor w({4, 1, 3, 3});
    EXPECT_EQ(okp::reshape_kernels(w).shape(), (okp::Shape{4, 9}));
}

TEST(ReshapeKernels, DegenerateSingleElement)
{
    okp::Tensor w({1, 1, 1, 1}, {0.75f});
    const auto m = okp::reshape_kernels(w);
    EXPECT_EQ(m.shape(), (okp::Shape{1, 1}));
    EXPECT_EQ(m[0], 0.75f);
}

TEST(ReshapeKernels, RowsEqualFlattenOracle)
{
    std::mt19937_64 gen(1);
    const auto w = random_tensor<double>(gen, {3, 2, 2, 2});
    const auto m = okp::reshape_kernels(w);
    ASSERT_EQ(m.shape(), (okp::Shape{3, 8}));
    for (std::size_t j = 0; j < 3; ++j) {
        std::size_t col = 0;
        for (std::size_t c = 0; c < 2; ++c) {
            for (std::size_t y = 0; y < 2; ++y) {
                for (std::size_t x = 0; x < 2; ++x) {
                    EXPECT_EQ(m.at({j, col}), w.at({j, c, y, x}));
                    ++col;
                }
            }
        }
    }
    EXPECT_THROW(okp::reshape_kernels(Tensor64({3, 4})), okp::ShapeError);
}

TEST(OrthoLoss, StandardBasisRowsGiveZero)
{
    std::vector<double> v(18, 0.0);
    v[0] = 1.0;
    v[9 + 1] = 1.0;
    const auto wm = matrix(2, 9, v);
    EXPECT_EQ(okp::ortho_loss(wm), 0.0);
    const auto g = okp::ortho_loss_grad(wm, 1e-12);
    for (double x : g.data()) {
        EXPECT_EQ(x, 0.0);
    }
}

TEST(OrthoLoss, IdenticalUnitRowsGiveSqrtTwo)
{
    const double a = 0.6;
    const double b = 0.8;
    const auto wm = matrix(2, 2, {a, b, a, b});
    EXPECT_NEAR(okp::ortho_loss(wm), std::sqrt(2.0), 1e-15);
    // G = [[0,1],[1,0]], so 2 G W / sqrt(2) swaps the rows and scales by sqrt(2).
    const auto g = okp::ortho_loss_grad(wm, 1e-12);
    const double s = 2.0 / std::sqrt(2.0);
    EXPECT_NEAR(g.at({0, 0}), s * a, 1e-15);
    EXPECT_NEAR(g.at({0, 1}), s * b, 1e-15);
    EXPECT_NEAR(g.at({1, 0}), s * a, 1e-15);
    EXPECT_NEAR(g.at({1, 1}), s * b, 1e-15);
}

TEST(OrthoLoss, RandomMatricesMatchOracle)
{
    std::mt19937_64 gen(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t rows = 1 + gen() % 16;
        const std::size_t cols = 1 + gen() % 32;
        const auto wm = random_tensor<double>(gen, {rows, cols});
        const std::vector<double> v(wm.data().begin(), wm.data().end());
        const double ref = oracle::gram_deviation_norm(v, rows, cols);
        EXPECT_NEAR(okp::ortho_loss(wm), ref, 1e-12 * std::max(1.0, ref));
        const auto wf = random_tensor<float>(gen, {rows, cols});
        const std::vector<double> vf(wf.data().begin(), wf.data().end());
        const double reff = oracle::gram_deviation_norm(vf, rows, cols);
        EXPECT_LE(oracle::relative_error(okp::ortho_loss(wf), reff), 1e-6) << reff;
    }
}

TEST(OrthoLoss, ZeroExactlyWhenRowsOrthonormal)
{
    const double c = std::cos(0.3);
    const double s = std::sin(0.3);
    EXPECT_NEAR(okp::ortho_loss(matrix(2, 2, {c, s, -s, c})), 0.0, 1e-6);
    EXPECT_GT(okp::ortho_loss(matrix(2, 2, {c, s, -s, 1.01 * c})), 1e-6);
    EXPECT_GT(okp::ortho_loss(matrix(2, 2, {c, s, c, s})), 1e-6);
}

TEST(OrthoLoss, RowPermutationInvariant)
{
    std::mt19937_64 gen(3);
    const auto wm = random_tensor<double>(gen, {5, 7});
    std::vector<double> permuted;
    for (std::size_t r : {3, 0, 4, 2, 1}) {
        auto row = wm.data().subspan(r * 7, 7);
        permuted.insert(permuted.end(), row.begin(), row.end());
    }
    EXPECT_NEAR(okp::ortho_loss(matrix(5, 7, permuted)), okp::ortho_loss(wm), 1e-13);
}

TEST(OrthoLossGrad, MatchesFiniteDifferences)
{
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t rows = 2 + gen() % 6;
        const std::size_t cols = rows + gen() % 10;
        const auto wm = random_tensor<double>(gen, {rows, cols});
        const auto analytic = okp::ortho_loss_grad(wm, 1e-12);
        const auto numeric = numeric_ortho_grad(wm, 1e-6);
        double worst = 0.0;
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            worst = std::max(worst, oracle::relative_error(analytic[i], numeric[i], 1e-6));
        }
        EXPECT_LT(worst, 1e-4) << rows << "x" << cols;
    }
}

TEST(OrthoLossGrad, SquaredVariantMatchesFiniteDifferences)
{
    std::mt19937_64 gen(5);
    const auto wm = random_tensor<double>(gen, {4, 9});
    EXPECT_NEAR(okp::ortho_loss(wm, true), std::pow(okp::ortho_loss(wm), 2), 1e-12);
    const auto analytic = okp::ortho_loss_grad(wm, 1e-12, true);
    std::vector<double> x(wm.data().begin(), wm.data().end());
    const auto numeric = oracle::numeric_gradient(
        [](const std::vector<double>& v) { return std::pow(oracle::gram_deviation_norm(v, 4, 9), 2); }, x, 1e-6);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        EXPECT_LT(oracle::relative_error(analytic[i], numeric[i], 1e-6), 1e-4);
    }
}

TEST(OrthoConfig, Validation)
{
    okp::OrthoConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.lambda_ortho = 1.0f;
    EXPECT_THROW(cfg.validate(), okp::ConfigError);
    cfg.lambda_ortho = -0.1f;
    EXPECT_THROW(cfg.validate(), okp::ConfigError);
    cfg = {};
    cfg.epsilon_guard = 0.0f;
    EXPECT_THROW(cfg.validate(), okp::ConfigError);
}

TEST(TotalLoss, ZeroLambdaIsPlainCrossEntropy)
{
    auto net = okp::Network::build(okp::desk_spec(4), 3);
    std::mt19937_64 gen(6);
    const auto batch = random_tensor<float>(gen, {4, 1, 28, 28}, 0.0, 1.0);
    const std::vector<int> labels{0, 1, 2, 3};
    okp::OrthoConfig cfg;
    cfg.lambda_ortho = 0.0f;
    const auto loss = okp::total_loss(net, batch, labels, cfg);

    auto plain = okp::Network::build(okp::desk_spec(4), 3);
    plain.zero_grad();
    const auto tape = plain.forward_recorded(batch);
    const auto ce = okp::ops::softmax_cross_entropy(tape.logits, labels);
    plain.backward(tape, okp::ops::softmax_cross_entropy_backward(ce.probabilities, labels));

    EXPECT_EQ(loss.total, ce.loss);
    const auto a = net.parameters();
    const auto b = plain.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i]->gradient, b[i]->gradient);
    }
}

TEST(TotalLoss, ZeroLogitPathTracksSummedOrthoTerms)
{
    // Zero dense weights freeze the CE term at ln(C) with no gradient reaching the convs.
    auto net = okp::Network64::build(okp::desk_spec(4, {1, 10, 10}), 8);
    auto layers = net.layers();
    for (auto& v : layers.back().weight.value.data()) {
        v = 0.0;
    }
    std::mt19937_64 gen(7);
    const auto batch = random_tensor<double>(gen, {3, 1, 10, 10}, 0.0, 1.0);
    const std::vector<int> labels{0, 2, 3};
    okp::OrthoConfig cfg;
    cfg.lambda_ortho = std::nextafter(1.0f, 0.0f);
    const auto loss = okp::total_loss(net, batch, labels, cfg);

    double summed = 0.0;
    for (std::size_t l = 0; l < net.conv_layer_count(); ++l) {
        const auto& w = net.conv_layer(l).weight.value;
        const std::vector<double> v(w.data().begin(), w.data().end());
        summed += oracle::gram_deviation_norm(v, w.extent(0), v.size() / w.extent(0));
    }
    EXPECT_NEAR(loss.cross_entropy, std::log(4.0), 1e-12);
    EXPECT_NEAR(loss.ortho, summed, 1e-10);
    EXPECT_NEAR(loss.total, std::log(4.0) + static_cast<double>(cfg.lambda_ortho) * summed, 1e-10);
    for (std::size_t l = 0; l < net.conv_layer_count(); ++l) {
        const auto& w = net.conv_layer(l).weight;
        const auto expected = okp::ortho_loss_grad(okp::reshape_kernels(w.value), 1e-12);
        for (std::size_t i = 0; i < expected.size(); ++i) {
            EXPECT_NEAR(w.gradient[i], static_cast<double>(cfg.lambda_ortho) * expected[i], 1e-12);
        }
    }
}

TEST(TotalLoss, JointGradientMatchesFiniteDifferences)
{
    auto net = okp::Network64::build(okp::desk_spec(3, {1, 8, 8}), 12);
    std::mt19937_64 gen(8);
    const auto batch = random_tensor<double>(gen, {2, 1, 8, 8}, 0.0, 1.0);
    const std::vector<int> labels{2, 0};
    okp::OrthoConfig cfg;
    cfg.lambda_ortho = 0.3f;
    const auto report = gradcheck::check_network(net, batch, labels, cfg, 1e-4);
    EXPECT_GT(report.checked, net.parameter_count() * 9 / 10);
    EXPECT_LT(report.max_relative_error, 1e-4);
}

TEST(TrainConfig, LearningRateSchedule)
{
    okp::TrainConfig cfg;
    cfg.eta0 = 0.1f;
    cfg.alpha = 0.9f;
    EXPECT_NEAR(cfg.learning_rate(0), 0.1, 1e-7);
    EXPECT_NEAR(cfg.learning_rate(2), 0.081, 1e-7);
    cfg.alpha = 1.0f;
    EXPECT_THROW(cfg.validate(), okp::ConfigError);
    cfg.alpha = 0.9f;
    cfg.epochs = 0;
    EXPECT_THROW(cfg.validate(), okp::ConfigError);
    cfg.epochs = 1;
    cfg.eta0 = 0.0f;
    EXPECT_THROW(cfg.validate(), okp::ConfigError);
}

class DeskTraining : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        const auto data = okp::synth_dataset(0, 4, 500, 28);
        okp::TrainConfig tcfg;
        okp::OrthoConfig ortho;
        okp::OrthoConfig plain;
        plain.lambda_ortho = 0.0f;
        ortho_net_ = new okp::Network(okp::Network::build(okp::desk_spec(4), 0));
        plain_net_ = new okp::Network(okp::Network::build(okp::desk_spec(4), 0));
        ortho_result_ = new okp::TrainResult(okp::train(*ortho_net_, data, tcfg, ortho));
        (void)okp::train(*plain_net_, data, tcfg, plain);
    }
    static void TearDownTestSuite()
    {
        delete ortho_net_;
        delete plain_net_;
        delete ortho_result_;
    }
    static okp::Network* ortho_net_;
    static okp::Network* plain_net_;
    static okp::TrainResult* ortho_result_;
};

okp::Network* DeskTraining::ortho_net_ = nullptr;
okp::Network* DeskTraining::plain_net_ = nullptr;
okp::TrainResult* DeskTraining::ortho_result_ = nullptr;

TEST_F(DeskTraining, FinalEpochLossBelowFirst)
{
    ASSERT_EQ(ortho_result_->epoch_loss.size(), 10u);
    EXPECT_LT(ortho_result_->epoch_loss.back(), ortho_result_->epoch_loss.front());
    EXPECT_GT(ortho_result_->seconds, 0.0);
}

TEST_F(DeskTraining, OrthoRunHasSmallerOffDiagonalGram)
{
    for (std::size_t l = 0; l < ortho_net_->conv_layer_count(); ++l) {
        const double with = okp::mean_abs_offdiag_gram(okp::reshape_kernels(ortho_net_->conv_layer(l).weight.value));
        const double without =
            okp::mean_abs_offdiag_gram(okp::reshape_kernels(plain_net_->conv_layer(l).weight.value));
        EXPECT_LT(with, without) << "conv layer " << l;
    }
}

TEST_F(DeskTraining, HeldOutAccuracyAtLeastNinetyPercent)
{
    const auto test_ds = okp::synth_dataset(1, 4, 300, 28);
    EXPECT_GE(okp::accuracy(*ortho_net_, test_ds), 0.9);
}

TEST(Training, SeedDeterministic)
{
    const auto data = okp::synth_dataset(1, 3, 20, 12);
    okp::TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.batch_size = 8;
    auto a = okp::Network::build(okp::desk_spec(3, {1, 12, 12}), 5);
    auto b = okp::Network::build(okp::desk_spec(3, {1, 12, 12}), 5);
    const auto ra = okp::train(a, data, tcfg, {});
    const auto rb = okp::train(b, data, tcfg, {});
    EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(pa[i]->value, pb[i]->value);
    }
}

TEST(Training, LearnsSixSynthClasses)
{
    const auto train_ds = okp::synth_dataset(2, 6, 200, 28);
    const auto test_ds = okp::synth_dataset(3, 6, 30, 28);
    okp::TrainConfig tcfg;
    tcfg.epochs = 10;
    auto net = okp::Network::build(okp::desk_spec(6), 0);
    okp::train(net, train_ds, tcfg, {});
    const auto predicted = okp::predict(net, test_ds.images);
    std::vector<int> hits(6, 0);
    for (std::size_t i = 0; i < test_ds.size(); ++i) {
        hits[static_cast<std::size_t>(test_ds.labels[i])] += predicted[i] == test_ds.labels[i];
    }
    // Classes 4 and 5 reuse no texture of classes 0..3.
    for (int c = 0; c < 6; ++c) {
        EXPECT_GT(hits[static_cast<std::size_t>(c)], 15) << "class " << c;
    }
}
