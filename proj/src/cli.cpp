#include "okp/cli.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "okp/checkpoint.hpp"
#include "okp/config.hpp"
#include "okp/container.hpp"
#include "okp/eval.hpp"
#include "okp/prune.hpp"

namespace okp {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct Options {
    fs::path config;
    fs::path checkpoint;
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> out;
};

struct Context {
    RunConfig cfg;
    fs::path out_dir;
    std::ostream& out;
};

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_json(const fs::path& path, const json& j)
{
    write_text(path, j.dump(2) + "\n");
}

json read_json(const fs::path& path)
{
    const auto bytes = read_file(path);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw FormatError(FormatError::Kind::bad_header, "'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

Checkpoint load_matching(const Context& ctx, const fs::path& path)
{
    auto ck = load_checkpoint(path);
    const auto expected = ctx.cfg.network_spec();
    if (!(ck.network.spec() == expected)) {
        throw ConfigError("checkpoint '" + path.string() + "' architecture does not match the config architecture");
    }
    return ck;
}

struct Splits {
    Partition train;
    Partition test;
};

Splits split(const RunConfig& cfg)
{
    const auto data = load_data(cfg);
    return {partition(data.train, cfg.forget_classes), partition(data.test, cfg.forget_classes)};
}

MiaResult run_mia(const Network& net, const Splits& s, const MiaProtocol& protocol)
{
    return mia_attack(net, s.train.retain, s.test.retain, s.train.forget, protocol);
}

int cmd_train(const Context& ctx)
{
    const auto& cfg = ctx.cfg;
    const auto data = load_data(cfg);
    auto net = Network::build(cfg.network_spec(), cfg.train.seed);
    const auto result = train(net, data.train, cfg.train, cfg.ortho);

    TrainingMeta meta;
    meta.seed = cfg.seed;
    meta.epochs = cfg.train.epochs;
    meta.lambda_ortho = cfg.ortho.lambda_ortho;
    save_checkpoint(net, meta, ctx.out_dir / "model.okpf");
    write_json(ctx.out_dir / "train_log.json", {{"epoch_loss", result.epoch_loss}, {"train_seconds", result.seconds}});
    write_json(ctx.out_dir / "config.json", config_to_json(cfg));

    ctx.out << "trained " << cfg.train.epochs << " epochs in " << result.seconds << " s; final loss "
            << result.epoch_loss.back() << "\n"
            << "train accuracy " << accuracy(net, data.train) << ", test accuracy " << accuracy(net, data.test)
            << "\n";
    return exit_ok;
}

int cmd_unlearn(const Context& ctx, const fs::path& checkpoint)
{
    const auto& cfg = ctx.cfg;
    auto ck = load_matching(ctx, checkpoint);
    const auto log_path = checkpoint.parent_path() / "train_log.json";
    const auto log = read_json(log_path);
    if (!log.contains("train_seconds") || !log["train_seconds"].is_number()) {
        throw FormatError(FormatError::Kind::bad_header, "'" + log_path.string() + "' lacks train_seconds");
    }
    const auto splits = split(cfg);

    UnlearnReport report;
    report.config = config_to_json(cfg);
    report.train_seconds = log["train_seconds"].get<double>();
    report.pre_acc_forget_test = accuracy(ck.network, splits.test.forget);
    report.pre_acc_retain_test = accuracy(ck.network, splits.test.retain);

    Network net = ck.network;
    auto [plan, seconds] = timed([&] {
        auto p = build_pruning_plan(net, splits.train, cfg.selection, cfg.lambda_floor);
        apply_soft_prune(net, p);
        return p;
    });
    report.unlearn_seconds = seconds;
    report.acc_forget_test = accuracy(net, splits.test.forget);
    report.acc_retain_test = accuracy(net, splits.test.retain);
    report.mia_success = run_mia(net, splits, cfg.mia).success;

    TrainingMeta meta = ck.meta;
    meta.extra["unlearned"] = {{"forget_classes", cfg.forget_classes},
                               {"ratio", cfg.selection.ratio},
                               {"lambda_floor", cfg.lambda_floor}};
    save_checkpoint(net, meta, ctx.out_dir / "unlearned.okpf");

    if (cfg.fine_tune.enabled) {
        TrainConfig tcfg = cfg.train;
        tcfg.epochs = cfg.fine_tune.epochs;
        const auto ft = fine_tune(net, splits.train.retain, tcfg, cfg.ortho);
        report.fine_tune_seconds = ft.seconds;
        report.fine_tuned_acc_forget_test = accuracy(net, splits.test.forget);
        report.fine_tuned_acc_retain_test = accuracy(net, splits.test.retain);
        meta.extra["fine_tune_epochs"] = tcfg.epochs;
        save_checkpoint(net, meta, ctx.out_dir / "fine_tuned.okpf");
    }

    write_json(ctx.out_dir / "plan.json", plan_to_json(plan));
    write_json(ctx.out_dir / "report.json", report_to_json(report));
    ctx.out << "pruned " << plan.entries.size() << " filters in " << seconds << " s\n"
            << "forget accuracy " << *report.pre_acc_forget_test << " -> " << *report.acc_forget_test
            << ", retain accuracy " << *report.pre_acc_retain_test << " -> " << *report.acc_retain_test << "\n";
    return exit_ok;
}

int cmd_eval(const Context& ctx, const fs::path& checkpoint)
{
    const auto ck = load_matching(ctx, checkpoint);
    const auto splits = split(ctx.cfg);
    const auto mia = run_mia(ck.network, splits, ctx.cfg.mia);
    const json j = {
        {"checkpoint", checkpoint.filename().string()},
        {"acc_forget_test", accuracy(ck.network, splits.test.forget)},
        {"acc_retain_test", accuracy(ck.network, splits.test.retain)},
        {"mia_success", mia.success},
        {"mia_attack_holdout_accuracy", mia.attack_holdout_accuracy},
    };
    write_json(ctx.out_dir / "eval.json", j);
    ctx.out << j.dump(2) << "\n";
    return exit_ok;
}

int cmd_sweep(const Context& ctx, const fs::path& checkpoint)
{
    const auto ck = load_matching(ctx, checkpoint);
    const auto splits = split(ctx.cfg);
    const auto rows =
        run_sweep(ck.network, splits.train, splits.test, ctx.cfg.selection, ctx.cfg.sweep.ratios, ctx.cfg.sweep.strengths);
    const auto csv = sweep_to_csv(rows);
    write_text(ctx.out_dir / "sweep.csv", csv);
    ctx.out << csv;
    return exit_ok;
}

int cmd_stats(const Context& ctx, const fs::path& checkpoint)
{
    const auto ck = load_matching(ctx, checkpoint);
    const auto splits = split(ctx.cfg);
    const auto sides = sample_sides(splits.train, ctx.cfg.selection);
    const auto stats =
        activation_stats(ck.network, sides.target, sides.retain, ctx.cfg.stats_layer, ctx.cfg.selection.point);
    std::ostringstream csv;
    csv.precision(9);
    csv << "filter,a_target,a_retain,diff\n";
    for (const auto& r : stats.records) {
        csv << r.filter << ',' << r.a_target << ',' << r.a_retain << ',' << r.diff << '\n';
    }
    write_text(ctx.out_dir / ("stats_layer" + std::to_string(ctx.cfg.stats_layer) + ".csv"), csv.str());
    ctx.out << csv.str();
    return exit_ok;
}

int cmd_mia(const Context& ctx, const fs::path& checkpoint)
{
    const auto ck = load_matching(ctx, checkpoint);
    const auto splits = split(ctx.cfg);
    const auto r = run_mia(ck.network, splits, ctx.cfg.mia);
    const json j = {
        {"checkpoint", checkpoint.filename().string()},
        {"mia_success", r.success},
        {"attack_train_accuracy", r.attack_train_accuracy},
        {"attack_holdout_accuracy", r.attack_holdout_accuracy},
        {"attack_train_size", r.attack_train_size},
        {"degenerate", r.degenerate},
        {"classifier", {{"weight", r.classifier.weight}, {"bias", r.classifier.bias}}},
    };
    write_json(ctx.out_dir / "mia.json", j);
    ctx.out << j.dump(2) << "\n";
    return exit_ok;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Class unlearning by orthogonal training and soft filter pruning", "okp"};
    app.require_subcommand(1);
    Options opt;
    std::uint64_t seed = 0;
    std::string out_dir;

    auto add_common = [&](CLI::App* sub, bool needs_checkpoint) {
        sub->add_option("--config", opt.config, "Run configuration (JSON)")->required();
        if (needs_checkpoint) {
            sub->add_option("--checkpoint", opt.checkpoint, "Input checkpoint")->required();
        }
        sub->add_option("--seed", seed, "Override the config seed");
        sub->add_option("--out", out_dir, "Override the output directory");
    };
    auto* train_cmd = app.add_subcommand("train", "Train a network with the orthogonality penalty");
    add_common(train_cmd, false);
    auto* unlearn_cmd = app.add_subcommand("unlearn", "Rank, soft-prune and report on a trained checkpoint");
    add_common(unlearn_cmd, true);
    auto* eval_cmd = app.add_subcommand("eval", "Accuracy on forget/retain test splits plus attack success");
    add_common(eval_cmd, true);
    auto* sweep_cmd = app.add_subcommand("sweep", "Grid over pruning ratio and strength floor");
    add_common(sweep_cmd, true);
    auto* stats_cmd = app.add_subcommand("stats", "Per-filter activation differences for one conv layer");
    add_common(stats_cmd, true);
    auto* mia_cmd = app.add_subcommand("mia", "Membership inference attack on the forget set");
    add_common(mia_cmd, true);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return exit_config;
    }

    try {
        auto cfg = load_config(opt.config);
        for (auto* sub : app.get_subcommands()) {
            if (sub->count("--seed") > 0) {
                cfg.apply_seed(seed);
            }
            if (sub->count("--out") > 0) {
                cfg.output_dir = out_dir;
            }
        }
        Context ctx{cfg, cfg.output_dir, out};
        ensure_dir(ctx.out_dir);
        if (train_cmd->parsed()) {
            return cmd_train(ctx);
        }
        if (unlearn_cmd->parsed()) {
            return cmd_unlearn(ctx, opt.checkpoint);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(ctx, opt.checkpoint);
        }
        if (sweep_cmd->parsed()) {
            return cmd_sweep(ctx, opt.checkpoint);
        }
        if (stats_cmd->parsed()) {
            return cmd_stats(ctx, opt.checkpoint);
        }
        return cmd_mia(ctx, opt.checkpoint);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const ShapeError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return exit_io;
    } catch (const FormatError& e) {
        err << "i/o error: " << e.what() << "\n";
        return exit_io;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return exit_internal;
    }
}

} // namespace okp
