#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "okp/channels.hpp"
#include "okp/data.hpp"
#include "okp/network.hpp"
#include "okp/ortho.hpp"

namespace okp {

/// Argmax per row; ties resolve to the smallest class index.
std::vector<int> predict(const Network& net, const Tensor& images);

/// Fraction of samples whose argmax logit equals the label.
double accuracy(const Network& net, const LabeledDataset& dataset);

/// Per-sample confidence of the model in the sample's own label, expressed as
/// log-odds log(p / (1 - p)) computed from the logits in f64. Strictly monotone
/// in the softmax confidence p, but never saturates at p == 1.
std::vector<double> confidence_scores(const Network& net, const LabeledDataset& dataset);

struct MiaProtocol {
    double attack_train_fraction = 0.5; // share of the balanced member/nonmember pool used to fit the attack
    std::size_t iterations = 2000;      // hinge subgradient steps
    double learning_rate = 0.5;
    double l2 = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

/// 1-D linear classifier: "member" iff weight * x + bias > 0. When `degenerate`,
/// every input is assigned `fallback_member`.
struct ThresholdClassifier {
    double weight = 0.0;
    double bias = 0.0;
    bool degenerate = false;
    bool fallback_member = false;

    [[nodiscard]] bool is_member(double x) const
    {
        return degenerate ? fallback_member : weight * x + bias > 0.0;
    }
};

/// Fits a linear SVM on a scalar feature by hinge-loss subgradient descent on
/// standardised inputs, then places the threshold along the learned direction at
/// the training-error minimum.
ThresholdClassifier fit_threshold_classifier(std::span<const double> members, std::span<const double> nonmembers,
                                             const MiaProtocol& protocol);

struct MiaResult {
    double success = 0.0;                 // fraction of targets classified as members
    double attack_train_accuracy = 0.0;
    double attack_holdout_accuracy = 0.0; // on the held-out member/nonmember split
    std::size_t attack_train_size = 0;
    bool degenerate = false;
    ThresholdClassifier classifier;
};

MiaResult mia_attack_features(std::span<const double> members, std::span<const double> nonmembers,
                              std::span<const double> targets, const MiaProtocol& protocol);

/// members: retained-class training samples; nonmembers: retained-class test
/// samples; targets: forget-set training samples.
MiaResult mia_attack(const Network& net, const LabeledDataset& members, const LabeledDataset& nonmembers,
                     const LabeledDataset& targets, const MiaProtocol& protocol);

/// Runs `action` and measures it on the monotonic clock.
template <typename F>
auto timed(F&& action)
{
    const auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
        std::forward<F>(action)();
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    } else {
        auto result = std::forward<F>(action)();
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return std::pair<decltype(result), double>{std::move(result), seconds};
    }
}

struct RetrainResult {
    Network network;
    TrainResult training;
    double seconds = 0.0;
};

/// Fresh build + training on the retained data only; class count unchanged.
RetrainResult retrain_baseline(const NetworkSpec& spec, const LabeledDataset& retain, const TrainConfig& tcfg,
                               const OrthoConfig& ocfg);

struct UnlearnReport {
    static constexpr int kSchemaVersion = 1;

    std::optional<double> acc_forget_test;
    std::optional<double> acc_retain_test;
    std::optional<double> mia_success;
    std::optional<double> unlearn_seconds;
    std::optional<double> train_seconds;

    // Optional context.
    std::optional<double> pre_acc_forget_test;
    std::optional<double> pre_acc_retain_test;
    std::optional<double> fine_tune_seconds;
    std::optional<double> fine_tuned_acc_forget_test;
    std::optional<double> fine_tuned_acc_retain_test;

    nlohmann::json config = nlohmann::json::object();

    friend bool operator==(const UnlearnReport&, const UnlearnReport&) = default;
};

/// Rejects reports with a missing required metric or an out-of-range value.
nlohmann::json report_to_json(const UnlearnReport& report);
UnlearnReport report_from_json(const nlohmann::json& j);

/// Names of the timing fields; excluded when comparing runs for reproducibility.
const std::vector<std::string>& report_timing_fields();

struct SweepRow {
    float ratio = 0.0f;
    float lambda_floor = 0.0f;
    double acc_forget_test = 0.0;
    double acc_retain_test = 0.0;
};

/// Each (ratio, lambda_floor) cell prunes a fresh copy of `original`.
std::vector<SweepRow> run_sweep(const Network& original, const Partition& train_split, const Partition& test_split,
                                SelectionConfig selection, std::span<const float> ratios,
                                std::span<const float> strengths);

std::string sweep_to_csv(std::span<const SweepRow> rows);

} // namespace okp
