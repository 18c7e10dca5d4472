#include "okp/config.hpp"

#include <fstream>
#include <set>

#include "okp/checkpoint.hpp"

namespace okp {

namespace {

using json = nlohmann::json;

/// Reads optional keys of one JSON object and rejects any it did not consume.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) {
            throw ConfigError(where() + " must be a JSON object");
        }
    }

    template <typename T>
    void read(const char* key, T& out)
    {
        seen_.insert(key);
        if (!j_.contains(key)) {
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(field(key) + " has the wrong type: " + j_.at(key).dump());
        }
    }

    const json* child(const char* key)
    {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const
    {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError("unknown field " + field(key.c_str()));
            }
        }
    }

    [[nodiscard]] std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    [[nodiscard]] std::string where() const { return path_.empty() ? "config" : path_; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename F>
void prefixed(const std::string& section, F&& check)
{
    try {
        check();
    } catch (const ConfigError& e) {
        throw ConfigError(section + ": " + e.what());
    }
}

std::vector<std::filesystem::path> paths_from(const json& j, const std::string& field)
{
    if (!j.is_array() || j.empty()) {
        throw ConfigError(field + " must be a nonempty list of file paths");
    }
    std::vector<std::filesystem::path> out;
    for (const auto& p : j) {
        if (!p.is_string()) {
            throw ConfigError(field + " entries must be strings");
        }
        out.emplace_back(p.get<std::string>());
    }
    return out;
}

ActivationPoint point_from(const std::string& s)
{
    if (s == "post") {
        return ActivationPoint::post_nonlinearity;
    }
    if (s == "pre") {
        return ActivationPoint::pre_nonlinearity;
    }
    throw ConfigError("selection.activation_point must be \"post\" or \"pre\", got \"" + s + "\"");
}

} // namespace

void RunConfig::apply_seed(std::uint64_t s)
{
    seed = s;
    train.seed = s;
    selection.seed = s;
    mia.seed = s;
}

std::size_t RunConfig::class_count() const
{
    return dataset.synth ? dataset.synth->class_count : 10;
}

NetworkSpec RunConfig::network_spec() const
{
    if (architecture) {
        return *architecture;
    }
    if (dataset.synth) {
        return desk_spec(dataset.synth->class_count, {1, dataset.synth->side, dataset.synth->side});
    }
    return desk_spec(10, {3, 32, 32});
}

void RunConfig::validate() const
{
    if (dataset.synth.has_value() == dataset.cifar10.has_value()) {
        throw ConfigError("dataset must name exactly one of synth or cifar10");
    }
    if (dataset.synth) {
        const auto& s = *dataset.synth;
        if (s.class_count < 2) {
            throw ConfigError("dataset.synth.class_count must be >= 2");
        }
        if (s.side < 8) {
            throw ConfigError("dataset.synth.side must be >= 8");
        }
        if (s.per_class < 1 || s.test_per_class < 1) {
            throw ConfigError("dataset.synth.per_class and test_per_class must be >= 1");
        }
    }
    prefixed("train", [&] { train.validate(); });
    prefixed("ortho", [&] { ortho.validate(); });
    prefixed("selection", [&] { selection.validate(); });
    prefixed("mia", [&] { mia.validate(); });
    if (!(lambda_floor >= 0.0f && lambda_floor <= 1.0f)) {
        throw ConfigError("lambda_floor must lie in [0,1], got " + std::to_string(lambda_floor));
    }
    const auto classes = class_count();
    std::set<int> unique(forget_classes.begin(), forget_classes.end());
    if (unique.empty() || unique.size() >= classes) {
        throw ConfigError("forget_classes must be a nonempty strict subset of the " + std::to_string(classes)
                          + " classes");
    }
    for (int c : unique) {
        if (c < 0 || static_cast<std::size_t>(c) >= classes) {
            throw ConfigError("forget_classes entry " + std::to_string(c) + " outside [0," + std::to_string(classes)
                              + ")");
        }
    }
    const auto spec = network_spec();
    if (spec.class_count != classes) {
        throw ConfigError("architecture.class_count (" + std::to_string(spec.class_count)
                          + ") must equal the dataset class count (" + std::to_string(classes) + ")");
    }
    prefixed("architecture", [&] {
        try {
            (void)infer_shapes(spec);
        } catch (const ShapeError& e) {
            throw ConfigError(e.what());
        }
    });
    if (fine_tune.enabled && fine_tune.epochs < 1) {
        throw ConfigError("fine_tune.epochs must be >= 1 when fine_tune.enabled");
    }
    for (float r : sweep.ratios) {
        if (!(r > 0.0f && r <= 1.0f)) {
            throw ConfigError("sweep.ratios entries must lie in (0,1], got " + std::to_string(r));
        }
    }
    for (float s : sweep.strengths) {
        if (!(s >= 0.0f && s <= 1.0f)) {
            throw ConfigError("sweep.strengths entries must lie in [0,1], got " + std::to_string(s));
        }
    }
    if (sweep.ratios.empty() || sweep.strengths.empty()) {
        throw ConfigError("sweep.ratios and sweep.strengths must be nonempty");
    }
}

RunConfig config_from_json(const json& j)
{
    RunConfig cfg;
    Section top(j, "");

    const json* ds = top.child("dataset");
    if (!ds) {
        throw ConfigError("dataset is required");
    }
    Section dataset(*ds, "dataset");
    if (const json* s = dataset.child("synth")) {
        SynthSource src;
        Section sec(*s, "dataset.synth");
        sec.read("train_seed", src.train_seed);
        sec.read("test_seed", src.test_seed);
        sec.read("class_count", src.class_count);
        sec.read("per_class", src.per_class);
        sec.read("test_per_class", src.test_per_class);
        sec.read("side", src.side);
        sec.finish();
        cfg.dataset.synth = src;
    }
    if (const json* c = dataset.child("cifar10")) {
        CifarSource src;
        Section sec(*c, "dataset.cifar10");
        const json* train = sec.child("train");
        const json* test = sec.child("test");
        if (!train || !test) {
            throw ConfigError("dataset.cifar10 needs both train and test file lists");
        }
        src.train_files = paths_from(*train, "dataset.cifar10.train");
        src.test_files = paths_from(*test, "dataset.cifar10.test");
        sec.finish();
        cfg.dataset.cifar10 = src;
    }
    dataset.finish();

    if (const json* a = top.child("architecture")) {
        cfg.architecture = spec_from_json(*a);
    }
    if (const json* t = top.child("train")) {
        Section sec(*t, "train");
        sec.read("epochs", cfg.train.epochs);
        sec.read("batch_size", cfg.train.batch_size);
        sec.read("eta0", cfg.train.eta0);
        sec.read("alpha", cfg.train.alpha);
        sec.finish();
    }
    if (const json* o = top.child("ortho")) {
        Section sec(*o, "ortho");
        sec.read("lambda_ortho", cfg.ortho.lambda_ortho);
        sec.read("epsilon_guard", cfg.ortho.epsilon_guard);
        sec.read("use_squared_variant", cfg.ortho.use_squared_variant);
        sec.finish();
    }
    if (const json* s = top.child("selection")) {
        Section sec(*s, "selection");
        sec.read("ratio", cfg.selection.ratio);
        sec.read("samples_per_side", cfg.selection.samples_per_side);
        sec.read("layers", cfg.selection.layers);
        std::string point = "post";
        sec.read("activation_point", point);
        cfg.selection.point = point_from(point);
        sec.finish();
    }
    if (const json* f = top.child("fine_tune")) {
        Section sec(*f, "fine_tune");
        sec.read("enabled", cfg.fine_tune.enabled);
        sec.read("epochs", cfg.fine_tune.epochs);
        sec.finish();
    }
    if (const json* m = top.child("mia")) {
        Section sec(*m, "mia");
        sec.read("attack_train_fraction", cfg.mia.attack_train_fraction);
        sec.read("iterations", cfg.mia.iterations);
        sec.read("learning_rate", cfg.mia.learning_rate);
        sec.read("l2", cfg.mia.l2);
        sec.finish();
    }
    if (const json* s = top.child("sweep")) {
        Section sec(*s, "sweep");
        sec.read("ratios", cfg.sweep.ratios);
        sec.read("strengths", cfg.sweep.strengths);
        sec.finish();
    }
    if (const json* s = top.child("stats")) {
        Section sec(*s, "stats");
        sec.read("layer", cfg.stats_layer);
        sec.finish();
    }
    top.read("lambda_floor", cfg.lambda_floor);
    top.read("forget_classes", cfg.forget_classes);
    std::uint64_t seed = 0;
    top.read("seed", seed);
    std::string out = cfg.output_dir.string();
    top.read("output_dir", out);
    cfg.output_dir = out;
    top.finish();

    cfg.apply_seed(seed);
    cfg.validate();
    return cfg;
}

json config_to_json(const RunConfig& cfg)
{
    json dataset;
    if (cfg.dataset.synth) {
        const auto& s = *cfg.dataset.synth;
        dataset["synth"] = {{"train_seed", s.train_seed}, {"test_seed", s.test_seed},
                            {"class_count", s.class_count}, {"per_class", s.per_class},
                            {"test_per_class", s.test_per_class}, {"side", s.side}};
    } else if (cfg.dataset.cifar10) {
        auto strings = [](const std::vector<std::filesystem::path>& ps) {
            json a = json::array();
            for (const auto& p : ps) {
                a.push_back(p.string());
            }
            return a;
        };
        dataset["cifar10"] = {{"train", strings(cfg.dataset.cifar10->train_files)},
                              {"test", strings(cfg.dataset.cifar10->test_files)}};
    }
    return {
        {"dataset", dataset},
        {"architecture", spec_to_json(cfg.network_spec())},
        {"train",
         {{"epochs", cfg.train.epochs}, {"batch_size", cfg.train.batch_size}, {"eta0", cfg.train.eta0},
          {"alpha", cfg.train.alpha}}},
        {"ortho",
         {{"lambda_ortho", cfg.ortho.lambda_ortho}, {"epsilon_guard", cfg.ortho.epsilon_guard},
          {"use_squared_variant", cfg.ortho.use_squared_variant}}},
        {"selection",
         {{"ratio", cfg.selection.ratio}, {"samples_per_side", cfg.selection.samples_per_side},
          {"layers", cfg.selection.layers},
          {"activation_point", cfg.selection.point == ActivationPoint::pre_nonlinearity ? "pre" : "post"}}},
        {"lambda_floor", cfg.lambda_floor},
        {"forget_classes", cfg.forget_classes},
        {"fine_tune", {{"enabled", cfg.fine_tune.enabled}, {"epochs", cfg.fine_tune.epochs}}},
        {"mia",
         {{"attack_train_fraction", cfg.mia.attack_train_fraction}, {"iterations", cfg.mia.iterations},
          {"learning_rate", cfg.mia.learning_rate}, {"l2", cfg.mia.l2}}},
        {"sweep", {{"ratios", cfg.sweep.ratios}, {"strengths", cfg.sweep.strengths}}},
        {"stats", {{"layer", cfg.stats_layer}}},
        {"seed", cfg.seed},
        {"output_dir", cfg.output_dir.string()},
    };
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    auto cfg = config_from_json(j);
    // Relative CIFAR paths resolve against the config file's directory.
    if (cfg.dataset.cifar10) {
        const auto base = path.parent_path();
        for (auto* list : {&cfg.dataset.cifar10->train_files, &cfg.dataset.cifar10->test_files}) {
            for (auto& p : *list) {
                if (p.is_relative()) {
                    p = base / p;
                }
            }
        }
    }
    return cfg;
}

LoadedData load_data(const RunConfig& cfg)
{
    if (cfg.dataset.synth) {
        const auto& s = *cfg.dataset.synth;
        return {synth_dataset(s.train_seed, s.class_count, s.per_class, s.side),
                synth_dataset(s.test_seed, s.class_count, s.test_per_class, s.side)};
    }
    return {load_cifar10(cfg.dataset.cifar10->train_files), load_cifar10(cfg.dataset.cifar10->test_files)};
}

} // namespace okp
