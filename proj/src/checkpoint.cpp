#include "okp/checkpoint.hpp"

#include "okp/container.hpp"

namespace okp {

nlohmann::json spec_to_json(const NetworkSpec& spec)
{
    auto layers = nlohmann::json::array();
    for (const auto& l : spec.layers) {
        nlohmann::json j = {{"kind", to_string(l.kind)}};
        switch (l.kind) {
        case LayerKind::conv:
            j["out_channels"] = l.out_channels;
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["pad"] = l.pad;
            break;
        case LayerKind::maxpool:
            j["window"] = l.window;
            j["stride"] = l.stride;
            break;
        case LayerKind::dense:
            j["units"] = l.units;
            break;
        case LayerKind::relu:
        case LayerKind::flatten:
            break;
        }
        layers.push_back(std::move(j));
    }
    return {{"input_shape", spec.input_shape}, {"class_count", spec.class_count}, {"layers", std::move(layers)}};
}

NetworkSpec spec_from_json(const nlohmann::json& j)
{
    try {
        NetworkSpec spec;
        spec.input_shape = j.at("input_shape").get<Shape>();
        spec.class_count = j.at("class_count").get<std::size_t>();
        for (const auto& lj : j.at("layers")) {
            const auto kind = layer_kind_from_string(lj.at("kind").get<std::string>());
            switch (kind) {
            case LayerKind::conv:
                spec.layers.push_back(LayerSpec::conv(lj.at("out_channels").get<std::size_t>(),
                                                      lj.at("kernel").get<std::size_t>(),
                                                      lj.value("stride", std::size_t{1}), lj.value("pad", std::size_t{0})));
                break;
            case LayerKind::relu:
                spec.layers.push_back(LayerSpec::relu());
                break;
            case LayerKind::maxpool:
                spec.layers.push_back(
                    LayerSpec::maxpool(lj.at("window").get<std::size_t>(), lj.at("stride").get<std::size_t>()));
                break;
            case LayerKind::flatten:
                spec.layers.push_back(LayerSpec::flatten());
                break;
            case LayerKind::dense:
                spec.layers.push_back(LayerSpec::dense(lj.at("units").get<std::size_t>()));
                break;
            }
        }
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("architecture: ") + e.what());
    }
}

std::vector<std::uint8_t> encode_checkpoint(const Network& net, const TrainingMeta& meta)
{
    nlohmann::json header = {
        {"format", "okp-checkpoint"},
        {"architecture", spec_to_json(net.spec())},
        {"metadata",
         {{"seed", meta.seed}, {"epochs", meta.epochs}, {"lambda_ortho", meta.lambda_ortho}, {"extra", meta.extra}}},
    };
    std::vector<NamedBuffer> buffers;
    const auto layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].has_params()) {
            continue;
        }
        const std::string prefix = "layer" + std::to_string(i);
        buffers.push_back({prefix + ".weight", layers[i].weight.value.shape(), layers[i].weight.value.data()});
        buffers.push_back({prefix + ".bias", layers[i].bias.value.shape(), layers[i].bias.value.data()});
    }
    return encode_container(kCheckpointMagic, std::move(header), buffers);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes)
{
    using Kind = FormatError::Kind;
    auto decoded = decode_container(kCheckpointMagic, bytes);
    const auto& h = decoded.header;
    if (!h.contains("architecture") || !h.contains("metadata")) {
        throw FormatError(Kind::bad_header, "checkpoint header lacks architecture or metadata");
    }

    Checkpoint ck;
    try {
        ck.network = Network(spec_from_json(h["architecture"]));
    } catch (const std::invalid_argument& e) {
        throw FormatError(Kind::architecture_mismatch, std::string("checkpoint architecture invalid: ") + e.what());
    }
    try {
        const auto& m = h["metadata"];
        ck.meta.seed = m.at("seed").get<std::uint64_t>();
        ck.meta.epochs = m.at("epochs").get<std::size_t>();
        ck.meta.lambda_ortho = m.at("lambda_ortho").get<double>();
        ck.meta.extra = m.value("extra", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(Kind::bad_header, std::string("checkpoint metadata: ") + e.what());
    }

    std::size_t next = 0;
    auto layers = ck.network.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].has_params()) {
            continue;
        }
        for (auto* slot : {&layers[i].weight, &layers[i].bias}) {
            if (next >= decoded.buffers.size()) {
                throw FormatError(Kind::architecture_mismatch,
                                  "architecture needs more buffers than the checkpoint holds");
            }
            auto& buf = decoded.buffers[next++];
            if (buf.shape != slot->value.shape()) {
                throw FormatError(Kind::architecture_mismatch,
                                  "buffer '" + buf.name + "' has shape " + shape_to_string(buf.shape)
                                      + ", architecture expects " + shape_to_string(slot->value.shape()));
            }
            *slot = GradPair(Tensor(buf.shape, std::move(buf.data)));
        }
    }
    if (next != decoded.buffers.size()) {
        throw FormatError(Kind::architecture_mismatch, "checkpoint holds more buffers than the architecture uses");
    }
    return ck;
}

void save_checkpoint(const Network& net, const TrainingMeta& meta, const std::filesystem::path& path)
{
    write_file(path, encode_checkpoint(net, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    return decode_checkpoint(read_file(path));
}

} // namespace okp
