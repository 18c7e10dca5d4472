#include "okp/ortho.hpp"

#include <chrono>

#include "okp/rng.hpp"

namespace okp {

void OrthoConfig::validate() const
{
    if (!(lambda_ortho >= 0.0f && lambda_ortho < 1.0f)) {
        throw ConfigError("lambda_ortho must lie in [0,1), got " + std::to_string(lambda_ortho));
    }
    if (!(epsilon_guard > 0.0f)) {
        throw ConfigError("epsilon_guard must be > 0");
    }
}

void TrainConfig::validate() const
{
    if (epochs < 1) {
        throw ConfigError("epochs must be >= 1");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (!(eta0 > 0.0f)) {
        throw ConfigError("eta0 must be > 0, got " + std::to_string(eta0));
    }
    if (!(alpha > 0.0f && alpha < 1.0f)) {
        throw ConfigError("alpha must lie in (0,1), got " + std::to_string(alpha));
    }
}

TrainResult train(Network& net, const LabeledDataset& dataset, const TrainConfig& tcfg, const OrthoConfig& ocfg)
{
    tcfg.validate();
    ocfg.validate();
    dataset.validate();
    const auto start = std::chrono::steady_clock::now();

    TrainResult result;
    const std::size_t n = dataset.size();
    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const auto eta = static_cast<float>(tcfg.learning_rate(epoch));
        const auto order = Rng(mix_seed(tcfg.seed, epoch)).permutation(n);
        double weighted = 0.0;
        for (std::size_t begin = 0; begin < n; begin += tcfg.batch_size) {
            const std::size_t end = std::min(n, begin + tcfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + begin, end - begin);
            const auto labels = dataset.batch_labels(idx);
            const auto loss = total_loss(net, dataset.batch(idx), labels, ocfg);
            weighted += static_cast<double>(loss.total) * static_cast<double>(idx.size());
            for (auto* p : net.parameters()) {
                auto value = p->value.data();
                auto grad = p->gradient.data();
                for (std::size_t i = 0; i < value.size(); ++i) {
                    value[i] -= eta * grad[i];
                }
            }
        }
        result.epoch_loss.push_back(weighted / static_cast<double>(n));
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

} // namespace okp
