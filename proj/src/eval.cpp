#include "okp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "okp/rng.hpp"

namespace okp {

namespace {

constexpr std::size_t kEvalChunk = 256;

/// Calls `fn(first_index, logits)` for consecutive chunks of the dataset.
template <typename Fn>
void for_each_logit_chunk(const Network& net, const Tensor& images, Fn&& fn)
{
    const std::size_t n = images.extent(0);
    const std::size_t stride = images.size() / n;
    for (std::size_t begin = 0; begin < n; begin += kEvalChunk) {
        const std::size_t count = std::min(kEvalChunk, n - begin);
        Shape shape = images.shape();
        shape[0] = count;
        std::vector<float> chunk(images.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                 images.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * stride));
        fn(begin, net.logits(Tensor(shape, std::move(chunk))));
    }
}

} // namespace

std::vector<int> predict(const Network& net, const Tensor& images)
{
    std::vector<int> out(images.extent(0));
    for_each_logit_chunk(net, images, [&](std::size_t first, const Tensor& logits) {
        const std::size_t c = logits.extent(1);
        for (std::size_t i = 0; i < logits.extent(0); ++i) {
            const float* row = logits.data().data() + i * c;
            out[first + i] = static_cast<int>(std::max_element(row, row + c) - row);
        }
    });
    return out;
}

double accuracy(const Network& net, const LabeledDataset& dataset)
{
    if (dataset.size() == 0) {
        throw ConfigError("accuracy: dataset must be nonempty");
    }
    const auto predicted = predict(net, dataset.images);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        hits += predicted[i] == dataset.labels[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

std::vector<double> confidence_scores(const Network& net, const LabeledDataset& dataset)
{
    std::vector<double> out(dataset.size());
    for_each_logit_chunk(net, dataset.images, [&](std::size_t first, const Tensor& logits) {
        const std::size_t c = logits.extent(1);
        for (std::size_t i = 0; i < logits.extent(0); ++i) {
            const float* row = logits.data().data() + i * c;
            const auto y = static_cast<std::size_t>(dataset.labels[first + i]);
            double rest_max = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < c; ++k) {
                if (k != y) {
                    rest_max = std::max(rest_max, static_cast<double>(row[k]));
                }
            }
            double rest = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                if (k != y) {
                    rest += std::exp(static_cast<double>(row[k]) - rest_max);
                }
            }
            out[first + i] = static_cast<double>(row[y]) - (rest_max + std::log(rest));
        }
    });
    return out;
}

void MiaProtocol::validate() const
{
    if (!(attack_train_fraction > 0.0 && attack_train_fraction <= 1.0)) {
        throw ConfigError("mia attack_train_fraction must lie in (0,1]");
    }
    if (iterations < 1 || !(learning_rate > 0.0) || !(l2 >= 0.0)) {
        throw ConfigError("mia iterations, learning_rate must be positive and l2 nonnegative");
    }
}

ThresholdClassifier fit_threshold_classifier(std::span<const double> members, std::span<const double> nonmembers,
                                             const MiaProtocol& protocol)
{
    protocol.validate();
    ThresholdClassifier clf;
    clf.fallback_member = members.size() > nonmembers.size();
    const std::size_t n = members.size() + nonmembers.size();
    if (members.empty() || nonmembers.empty()) {
        clf.degenerate = true;
        return clf;
    }

    std::vector<double> x(members.begin(), members.end());
    x.insert(x.end(), nonmembers.begin(), nonmembers.end());
    std::vector<double> y(n, -1.0);
    std::fill_n(y.begin(), members.size(), 1.0);

    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : x) {
        var += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (!(sd > 0.0) || !std::isfinite(sd)) {
        clf.degenerate = true;
        return clf;
    }
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = (x[i] - mean) / sd;
    }

    // Full-batch subgradient descent on l2/2 w^2 + mean hinge(1 - y (w z + b)).
    double w = 0.0;
    double b = 0.0;
    for (std::size_t t = 0; t < protocol.iterations; ++t) {
        double gw = protocol.l2 * w;
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (y[i] * (w * z[i] + b) < 1.0) {
                gw -= y[i] * z[i] / static_cast<double>(n);
                gb -= y[i] / static_cast<double>(n);
            }
        }
        const double step = protocol.learning_rate / std::sqrt(static_cast<double>(t + 1));
        w -= step * gw;
        b -= step * gb;
    }
    if (w == 0.0) {
        clf.degenerate = true;
        return clf;
    }

    // Place the threshold along the learned direction at the training-error minimum;
    // among equally good cut points keep the one nearest the hinge solution.
    const double dir = w > 0.0 ? 1.0 : -1.0;
    const double hinge_cut = -b / std::abs(w);
    std::vector<std::pair<double, double>> proj(n); // (projected value, label)
    for (std::size_t i = 0; i < n; ++i) {
        proj[i] = {dir * z[i], y[i]};
    }
    std::sort(proj.begin(), proj.end());
    std::size_t correct = std::count_if(proj.begin(), proj.end(), [](const auto& p) { return p.second > 0; });
    std::size_t best_correct = correct;
    double best_cut = proj.front().first - 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        correct += proj[i].second < 0 ? 1 : 0;
        correct -= proj[i].second > 0 ? 1 : 0;
        if (i + 1 < n && proj[i + 1].first == proj[i].first) {
            continue;
        }
        const double cut = i + 1 < n ? 0.5 * (proj[i].first + proj[i + 1].first) : proj[i].first + 1.0;
        if (correct > best_correct
            || (correct == best_correct && std::abs(cut - hinge_cut) < std::abs(best_cut - hinge_cut))) {
            best_correct = correct;
            best_cut = cut;
        }
    }
    // dir * (x - mean) / sd > cut  <=>  dir * x - (cut * sd + dir * mean) > 0
    clf.weight = dir;
    clf.bias = -(best_cut * sd + dir * mean);
    return clf;
}

namespace {

double member_rate(const ThresholdClassifier& clf, std::span<const double> xs)
{
    if (xs.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (double x : xs) {
        hits += clf.is_member(x) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(xs.size());
}

double split_accuracy(const ThresholdClassifier& clf, std::span<const double> members,
                      std::span<const double> nonmembers)
{
    const std::size_t n = members.size() + nonmembers.size();
    if (n == 0) {
        return 0.0;
    }
    const double hits = member_rate(clf, members) * static_cast<double>(members.size())
                        + (1.0 - member_rate(clf, nonmembers)) * static_cast<double>(nonmembers.size());
    return hits / static_cast<double>(n);
}

} // namespace

MiaResult mia_attack_features(std::span<const double> members, std::span<const double> nonmembers,
                              std::span<const double> targets, const MiaProtocol& protocol)
{
    protocol.validate();
    if (members.empty() || nonmembers.empty() || targets.empty()) {
        throw ConfigError("mia_attack: members, nonmembers and targets must all be nonempty");
    }
    // Balance the pool so the attack is not biased toward the larger side, then split.
    Rng rng(protocol.seed);
    const std::size_t m = std::min(members.size(), nonmembers.size());
    const auto pm = rng.sample(members.size(), m);
    const auto pn = rng.sample(nonmembers.size(), m);
    const std::size_t n_train =
        std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(protocol.attack_train_fraction * m)), 1, m);

    std::vector<double> train_m, train_n, hold_m, hold_n;
    for (std::size_t i = 0; i < m; ++i) {
        (i < n_train ? train_m : hold_m).push_back(members[pm[i]]);
        (i < n_train ? train_n : hold_n).push_back(nonmembers[pn[i]]);
    }

    MiaResult result;
    result.classifier = fit_threshold_classifier(train_m, train_n, protocol);
    result.degenerate = result.classifier.degenerate;
    result.attack_train_size = train_m.size() + train_n.size();
    result.attack_train_accuracy = split_accuracy(result.classifier, train_m, train_n);
    result.attack_holdout_accuracy =
        hold_m.empty() ? result.attack_train_accuracy : split_accuracy(result.classifier, hold_m, hold_n);
    result.success = member_rate(result.classifier, targets);
    return result;
}

MiaResult mia_attack(const Network& net, const LabeledDataset& members, const LabeledDataset& nonmembers,
                     const LabeledDataset& targets, const MiaProtocol& protocol)
{
    const auto fm = confidence_scores(net, members);
    const auto fn = confidence_scores(net, nonmembers);
    const auto ft = confidence_scores(net, targets);
    return mia_attack_features(fm, fn, ft, protocol);
}

RetrainResult retrain_baseline(const NetworkSpec& spec, const LabeledDataset& retain, const TrainConfig& tcfg,
                               const OrthoConfig& ocfg)
{
    if (retain.size() == 0) {
        throw ConfigError("retrain_baseline: retained data must be nonempty");
    }
    auto [result, seconds] = timed([&] {
        RetrainResult r{Network::build(spec, tcfg.seed), {}, 0.0};
        r.training = train(r.network, retain, tcfg, ocfg);
        return r;
    });
    result.seconds = seconds;
    return std::move(result);
}

const std::vector<std::string>& report_timing_fields()
{
    static const std::vector<std::string> fields{"unlearn_seconds", "train_seconds", "fine_tune_seconds"};
    return fields;
}

namespace {

struct ReportField {
    const char* name;
    std::optional<double> UnlearnReport::*member;
    bool required;
    bool unit_interval;
};

constexpr ReportField kReportFields[] = {
    {"acc_forget_test", &UnlearnReport::acc_forget_test, true, true},
    {"acc_retain_test", &UnlearnReport::acc_retain_test, true, true},
    {"mia_success", &UnlearnReport::mia_success, true, true},
    {"unlearn_seconds", &UnlearnReport::unlearn_seconds, true, false},
    {"train_seconds", &UnlearnReport::train_seconds, true, false},
    {"pre_acc_forget_test", &UnlearnReport::pre_acc_forget_test, false, true},
    {"pre_acc_retain_test", &UnlearnReport::pre_acc_retain_test, false, true},
    {"fine_tune_seconds", &UnlearnReport::fine_tune_seconds, false, false},
    {"fine_tuned_acc_forget_test", &UnlearnReport::fine_tuned_acc_forget_test, false, true},
    {"fine_tuned_acc_retain_test", &UnlearnReport::fine_tuned_acc_retain_test, false, true},
};

void check_field(const ReportField& f, const std::optional<double>& v)
{
    if (!v) {
        if (f.required) {
            throw ConfigError(std::string("report is missing required metric '") + f.name + "'");
        }
        return;
    }
    if (f.unit_interval && !(*v >= 0.0 && *v <= 1.0)) {
        throw ConfigError(std::string("report metric '") + f.name + "' outside [0,1]");
    }
    if (!f.unit_interval && !(*v >= 0.0)) {
        throw ConfigError(std::string("report metric '") + f.name + "' must be >= 0");
    }
}

} // namespace

nlohmann::json report_to_json(const UnlearnReport& report)
{
    nlohmann::json j = {{"schema_version", UnlearnReport::kSchemaVersion}, {"config", report.config}};
    for (const auto& f : kReportFields) {
        const auto& v = report.*(f.member);
        check_field(f, v);
        if (v) {
            j[f.name] = *v;
        }
    }
    return j;
}

UnlearnReport report_from_json(const nlohmann::json& j)
{
    if (!j.is_object() || j.value("schema_version", 0) != UnlearnReport::kSchemaVersion) {
        throw ConfigError("report schema_version must be " + std::to_string(UnlearnReport::kSchemaVersion));
    }
    UnlearnReport r;
    r.config = j.value("config", nlohmann::json::object());
    for (const auto& f : kReportFields) {
        if (j.contains(f.name)) {
            if (!j[f.name].is_number()) {
                throw ConfigError(std::string("report metric '") + f.name + "' must be a number");
            }
            r.*(f.member) = j[f.name].get<double>();
        }
        check_field(f, r.*(f.member));
    }
    return r;
}

std::vector<SweepRow> run_sweep(const Network& original, const Partition& train_split, const Partition& test_split,
                                SelectionConfig selection, std::span<const float> ratios,
                                std::span<const float> strengths)
{
    std::vector<SweepRow> rows;
    for (float r : ratios) {
        for (float s : strengths) {
            selection.ratio = r;
            Network net = original;
            const auto plan = build_pruning_plan(net, train_split, selection, s);
            apply_soft_prune(net, plan);
            rows.push_back({r, s, accuracy(net, test_split.forget), accuracy(net, test_split.retain)});
        }
    }
    return rows;
}

std::string sweep_to_csv(std::span<const SweepRow> rows)
{
    std::ostringstream out;
    out.precision(9);
    out << "ratio,lambda_floor,acc_forget_test,acc_retain_test\n";
    for (const auto& r : rows) {
        out << r.ratio << ',' << r.lambda_floor << ',' << r.acc_forget_test << ',' << r.acc_retain_test << '\n';
    }
    return out.str();
}

} // namespace okp
