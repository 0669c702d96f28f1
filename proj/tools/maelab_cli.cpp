// maelab — single entry point for pretraining, restoration training,
// evaluation, metric runs, NIQE fitting, gradient verification, and run
// comparison. Config files are the source of truth; flags override single
// keys. Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include "maelab/binio.hpp"
#include "maelab/config.hpp"
#include "maelab/data.hpp"
#include "maelab/error.hpp"
#include "maelab/gradcheck.hpp"
#include "maelab/image_io.hpp"
#include "maelab/mae.hpp"
#include "maelab/metrics.hpp"
#include "maelab/niqe.hpp"
#include "maelab/ops.hpp"
#include "maelab/report.hpp"
#include "maelab/restore.hpp"
#include "maelab/rng.hpp"
#include "maelab/tensor.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace maelab;

constexpr const char* kUsage =
    "usage: maelab <subcommand> [flags]\n"
    "\n"
    "subcommands:\n"
    "  pretrain-mae  --config FILE [--out DIR] [overrides]   self-supervised MAE pretraining\n"
    "  train         --config FILE [--out DIR] [overrides]   restoration training + evaluation\n"
    "  eval          --config FILE --model FILE [--out DIR]  evaluate a saved restoration model\n"
    "  metrics       --pred IMG --gt IMG [--metrics LIST] [--niqe-model FILE] [--ergas-ratio R]\n"
    "  fit-niqe      --config FILE | --corpus PATH [--patch N] [--fraction F] [--channels N]\n"
    "  gradcheck     [--out DIR]                              finite-difference op verification\n"
    "  compare       REPORT [REPORT...] [--out DIR]           cross-run comparison table\n"
    "\n"
    "common flags:\n"
    "  --out DIR          output directory (default: $MAELAB_OUT or ./maelab-out)\n"
    "  --set KEY=VALUE    override a config key (repeatable; section.key or bare key)\n"
    "  --lambda V / --steps N / --seed N   shorthands for the matching config keys\n";

struct Cli {
    std::string subcommand;
    std::map<std::string, std::string> flags;   // --name value
    std::vector<std::string> overrides;         // accumulated --set / shorthands
    std::vector<std::string> positional;
};

Cli parse_cli(int argc, char** argv) {
    if (argc < 2) throw ConfigError("no subcommand given");
    Cli cli;
    cli.subcommand = argv[1];
    for (int i = 2; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg.rfind("--", 0) != 0) {
            cli.positional.push_back(arg);
            continue;
        }
        const std::string name = arg.substr(2);
        if (name == "help") {
            std::fputs(kUsage, stdout);
            std::exit(0);
        }
        if (i + 1 >= argc) throw ConfigError("flag --" + name + " needs a value");
        const std::string value = argv[++i];
        if (name == "set") {
            cli.overrides.push_back(value);
        } else if (name == "lambda" || name == "steps" || name == "seed") {
            cli.overrides.push_back(name + "=" + value);
        } else {
            if (cli.flags.count(name)) throw ConfigError("flag --" + name + " given twice");
            cli.flags[name] = value;
        }
    }
    return cli;
}

std::string require_flag(const Cli& cli, const std::string& name) {
    auto it = cli.flags.find(name);
    if (it == cli.flags.end()) {
        throw ConfigError("subcommand '" + cli.subcommand + "' requires --" + name);
    }
    return it->second;
}

std::filesystem::path output_dir(const Cli& cli) {
    auto it = cli.flags.find("out");
    std::filesystem::path dir;
    if (it != cli.flags.end()) {
        dir = it->second;
    } else if (const char* env = std::getenv("MAELAB_OUT")) {
        dir = env;
    } else {
        dir = "maelab-out";
    }
    std::filesystem::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------------------
// pretrain-mae
// ---------------------------------------------------------------------------

int run_pretrain(const Cli& cli) {
    const PretrainInvocation inv =
        parse_pretrain_config(parse_kv_file(require_flag(cli, "config")), cli.overrides);
    const std::filesystem::path out = output_dir(cli);
    const std::string echo = pretrain_config_text(inv);
    std::fputs(echo.c_str(), stdout);

    const std::vector<Tensor> dataset = load_image_dataset(inv.train_path, inv.channels);
    MaeModel model = init_mae(inv.channels, inv.feature_channels, inv.depth, inv.pretrain.seed);
    const std::vector<double> curve = pretrain(model, dataset, inv.pretrain);
    const std::filesystem::path ckpt = out / "mae.maec";
    save_checkpoint(ckpt, model);

    std::string report = "PPRT1\n[config]\n" + echo + "[curve]\nstep,loss\n";
    for (size_t i = 0; i < curve.size(); ++i) {
        report += std::to_string(i) + "," + format_double(curve[i]) + "\n";
    }
    report += "[result]\n";
    report += "checkpoint = " + ckpt.string() + "\n";
    char sum[16];
    std::snprintf(sum, sizeof(sum), "%08x", weight_checksum(model));
    report += std::string("weight_checksum = ") + sum + "\n";
    write_file(out / "pretrain_report.txt", report);

    std::printf("pretrained %lld steps: loss %s -> %s\n",
                static_cast<long long>(curve.size()), format_double(curve.front()).c_str(),
                format_double(curve.back()).c_str());
    std::printf("checkpoint written to %s\n", ckpt.string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int run_train(const Cli& cli) {
    const ExperimentConfig cfg = resolve_experiment_config(
        parse_experiment_config(parse_kv_file(require_flag(cli, "config")), cli.overrides));
    const std::filesystem::path out = output_dir(cli);
    std::fputs(experiment_config_text(cfg).c_str(), stdout);

    const TrainResult result = train_restoration(cfg, out / "restored");
    save_restoration_model(out / "model.rmdl", result.model);
    save_report(out / "report.rrpt", result.report);
    write_file(out / "train_log.csv", train_log_csv(result.report));
    write_file(out / "eval.csv", eval_csv(result.report.eval));

    std::printf("final train loss %s after %lld steps\n",
                format_double(result.report.train_log.back().total).c_str(),
                static_cast<long long>(result.report.train_log.size()));
    for (size_t m = 0; m < result.report.eval.metric_names.size(); ++m) {
        std::printf("%s %.4f\n", result.report.eval.metric_names[m].c_str(),
                    result.report.eval.aggregate[m]);
    }
    std::printf("report written to %s\n", (out / "report.rrpt").string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int run_eval(const Cli& cli) {
    const ExperimentConfig cfg = resolve_experiment_config(
        parse_experiment_config(parse_kv_file(require_flag(cli, "config")), cli.overrides));
    const RestorationModel model = load_restoration_model(require_flag(cli, "model"));
    const std::filesystem::path out = output_dir(cli);
    std::fputs(experiment_config_text(cfg).c_str(), stdout);

    const bool video = cfg.task == TaskKind::video_denoise;
    std::vector<Tensor> val_set;
    int64_t frames = 1;
    if (video) {
        val_set = load_video_dataset(cfg.val_path, cfg.channels, &frames);
    } else {
        val_set = load_image_dataset(cfg.val_path, cfg.channels);
    }
    const int64_t expect_channels = video ? cfg.channels * frames : cfg.channels;
    if (model.in_channels != expect_channels) {
        throw ConfigError("model expects " + std::to_string(model.in_channels) +
                          " channels but the task provides " + std::to_string(expect_channels));
    }

    NiqeModel niqe;
    const NiqeModel* niqe_ptr = nullptr;
    if (std::find(cfg.metrics.begin(), cfg.metrics.end(), "NIQE") != cfg.metrics.end()) {
        niqe = load_niqe_model(cfg.niqe_model);
        niqe_ptr = &niqe;
    }

    RunReport report;
    report.config = cfg;
    report.eval = evaluate(model, val_set, degradation_for(cfg, true), cfg.metrics, niqe_ptr,
                           out / "restored", frames);
    report.seed = cfg.seed;
    report.weight_checksum = weight_checksum(model);
    save_report(out / "report.rrpt", report);
    write_file(out / "eval.csv", eval_csv(report.eval));

    for (size_t m = 0; m < report.eval.metric_names.size(); ++m) {
        std::printf("%s %.4f\n", report.eval.metric_names[m].c_str(), report.eval.aggregate[m]);
    }
    std::printf("report written to %s\n", (out / "report.rrpt").string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

int run_metrics(const Cli& cli) {
    const Tensor pred = to_tensor(read_pnm(require_flag(cli, "pred")));
    const Tensor gt = to_tensor(read_pnm(require_flag(cli, "gt")));
    std::vector<std::string> names = {"PSNR", "SSIM"};
    auto it = cli.flags.find("metrics");
    if (it != cli.flags.end()) {
        names.clear();
        std::string list = it->second;
        size_t pos = 0;
        while (pos <= list.size()) {
            const size_t comma = list.find(',', pos);
            names.push_back(list.substr(pos, comma == std::string::npos ? std::string::npos
                                                                        : comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    double ergas_ratio = 1.0;
    if (auto r = cli.flags.find("ergas-ratio"); r != cli.flags.end()) {
        ergas_ratio = parse_double_strict(r->second, "--ergas-ratio");
    }
    std::optional<NiqeModel> niqe;
    if (auto n = cli.flags.find("niqe-model"); n != cli.flags.end()) {
        niqe = load_niqe_model(n->second);
    }

    std::string report = "MPRT1\n";
    for (const std::string& name : names) {
        double value = 0.0;
        if (name == "PSNR") value = psnr(pred, gt, 1.0);
        else if (name == "SSIM") value = ssim(pred, gt, 1.0);
        else if (name == "SAM") value = sam(pred, gt);
        else if (name == "ERGAS") value = ergas(pred, gt, ergas_ratio).value;
        else if (name == "NIQE") {
            if (!niqe) throw ConfigError("metric NIQE requires --niqe-model");
            value = niqe_score(from_tensor(pred), *niqe);
        } else {
            throw ConfigError("unknown metric '" + name +
                              "' (supported: PSNR, SSIM, SAM, ERGAS, NIQE)");
        }
        std::printf("%s %.4f\n", name.c_str(), value);
        report += name + " = " + format_double(value) + "\n";
    }
    write_file(output_dir(cli) / "metrics_report.txt", report);
    return 0;
}

// ---------------------------------------------------------------------------
// fit-niqe
// ---------------------------------------------------------------------------

int run_fit_niqe(const Cli& cli) {
    FitNiqeInvocation inv;
    if (cli.flags.count("config")) {
        inv = parse_fit_niqe_config(parse_kv_file(cli.flags.at("config")), cli.overrides);
    } else {
        inv.corpus_path = require_flag(cli, "corpus");
        if (auto f = cli.flags.find("patch"); f != cli.flags.end()) {
            inv.patch_size = parse_int_strict(f->second, "--patch");
        }
        if (auto f = cli.flags.find("fraction"); f != cli.flags.end()) {
            inv.sharpness_fraction = parse_double_strict(f->second, "--fraction");
        }
        if (auto f = cli.flags.find("channels"); f != cli.flags.end()) {
            inv.channels = parse_int_strict(f->second, "--channels");
        }
    }
    const std::filesystem::path out = output_dir(cli);
    const std::string echo = fit_niqe_config_text(inv);
    std::fputs(echo.c_str(), stdout);

    std::vector<ImageBuffer> corpus;
    for (const Tensor& t : load_image_dataset(inv.corpus_path, inv.channels)) {
        corpus.push_back(from_tensor(t));
    }
    const NiqeModel model = niqe_fit(corpus, inv.patch_size, inv.sharpness_fraction);
    const std::filesystem::path path = out / "niqe.model";
    save_niqe_model(path, model);

    std::string report = "NPRT1\n[config]\n" + echo + "[result]\n";
    report += "corpus_images = " + std::to_string(corpus.size()) + "\n";
    report += "model = " + path.string() + "\n";
    write_file(out / "fit_niqe_report.txt", report);
    std::printf("NIQE model fitted on %lld images, written to %s\n",
                static_cast<long long>(corpus.size()), path.string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct OpCheck {
    std::string name;
    GradCheckResult result;
};

Tensor seeded(const Shape& shape, uint64_t seed, double scale = 1.0, double offset = 0.0) {
    Tensor t = Tensor::zeros(shape);
    Rng rng(seed);
    for (double& v : t.mutable_data()) v = offset + scale * rng.next_normal();
    t.set_requires_grad(true);
    return t;
}

int run_gradcheck(const Cli& cli) {
    using namespace maelab::ops;
    std::vector<OpCheck> checks;
    GradCheckOptions opt;

    auto check = [&](const std::string& name,
                     const std::function<Tensor(Tape*, std::vector<Tensor>&)>& fn,
                     std::vector<Tensor> inputs, double skip_below = 0.0) {
        GradCheckOptions o = opt;
        o.skip_below = skip_below;
        checks.push_back({name, grad_check(fn, std::move(inputs), o)});
    };

    check("conv2d",
          [](Tape* t, std::vector<Tensor>& in) {
              return sum(t, conv2d(t, in[0], in[1], 2, 1));
          },
          {seeded({1, 2, 8, 8}, 11), seeded({3, 2, 3, 3}, 12)});
    check("conv2d_transpose",
          [](Tape* t, std::vector<Tensor>& in) {
              return sum(t, conv2d_transpose(t, in[0], in[1], 2, 1));
          },
          {seeded({1, 3, 4, 4}, 13), seeded({3, 2, 3, 3}, 14)});
    check("bias_add",
          [](Tape* t, std::vector<Tensor>& in) { return sum(t, bias_add(t, in[0], in[1])); },
          {seeded({1, 3, 4, 4}, 15), seeded({3}, 16)});
    check("relu",
          [](Tape* t, std::vector<Tensor>& in) { return sum(t, relu(t, in[0])); },
          {seeded({1, 2, 6, 6}, 17)}, 1e-3);
    check("leaky_relu",
          [](Tape* t, std::vector<Tensor>& in) { return sum(t, leaky_relu(t, in[0], 0.1)); },
          {seeded({1, 2, 6, 6}, 18)}, 1e-3);
    check("add",
          [](Tape* t, std::vector<Tensor>& in) { return sum(t, add(t, in[0], in[1])); },
          {seeded({1, 2, 5, 5}, 19), seeded({1, 2, 5, 5}, 20)});
    check("mul_scalar",
          [](Tape* t, std::vector<Tensor>& in) { return sum(t, mul_scalar(t, in[0], -2.5)); },
          {seeded({1, 2, 5, 5}, 21)});
    {
        Tensor mask = Tensor::zeros({1, 1, 5, 5});
        Rng rng(22);
        for (double& v : mask.mutable_data()) v = rng.next_unit() < 0.5 ? 0.0 : 1.0;
        check("mask_mul",
              [mask](Tape* t, std::vector<Tensor>& in) {
                  return sum(t, mask_mul(t, in[0], mask));
              },
              {seeded({1, 2, 5, 5}, 23)});
    }
    check("crop",
          [](Tape* t, std::vector<Tensor>& in) { return sum(t, crop(t, in[0], 1, 2, 3, 3)); },
          {seeded({1, 2, 6, 6}, 24)});
    check("sum",
          [](Tape* t, std::vector<Tensor>& in) { return sum(t, in[0]); },
          {seeded({1, 2, 4, 4}, 25)});
    check("l1_loss",
          [](Tape* t, std::vector<Tensor>& in) { return l1_loss(t, in[0], in[1]); },
          {seeded({1, 2, 5, 5}, 26, 0.2, 1.0), seeded({1, 2, 5, 5}, 27, 0.2, -1.0)});
    check("l2_loss",
          [](Tape* t, std::vector<Tensor>& in) { return l2_loss(t, in[0], in[1]); },
          {seeded({1, 2, 5, 5}, 28), seeded({1, 2, 5, 5}, 29)});
    {
        Tensor mask = Tensor::zeros({1, 1, 5, 5});
        Rng rng(30);
        for (double& v : mask.mutable_data()) v = rng.next_unit() < 0.5 ? 0.0 : 1.0;
        check("masked_l2_loss",
              [mask](Tape* t, std::vector<Tensor>& in) {
                  return masked_l2_loss(t, in[0], in[1], mask);
              },
              {seeded({1, 2, 5, 5}, 31), seeded({1, 2, 5, 5}, 32)});
    }
    {
        // full CCMAE reconstruction under the pretraining loss; the textured
        // input keeps pre-activations away from the leaky_relu kink at zero
        MaeModel mae = init_mae(1, 8, 2, 33);
        set_trainable(mae, true);
        Tensor input = synthetic_texture(34, 1, 8, 8);
        input.set_requires_grad(true);
        const Tensor target = synthetic_texture(35, 1, 8, 8);
        std::vector<Tensor> inputs = mae.parameters();
        inputs.push_back(input);
        check("mae_reconstruct+l2",
              [mae, input, target](Tape* t, std::vector<Tensor>&) {
                  return ops::l2_loss(t, reconstruct(t, mae, input), target);
              },
              inputs);
    }
    {
        // total training objective: gradient flows through the prediction
        MaeModel mae = init_mae(1, 8, 2, 36);
        set_trainable(mae, false);
        const Tensor gt = synthetic_texture(37, 1, 8, 8);
        Tensor pred = Tensor::zeros(gt.shape());
        {
            Rng rng(38);
            auto g = gt.data();
            auto p = pred.mutable_data();
            for (size_t i = 0; i < p.size(); ++i) {
                p[i] = g[i] + 0.2 + 0.05 * rng.next_unit(); // off the |x| kink
            }
        }
        pred.set_requires_grad(true);
        LossConfig lc;
        lc.lambda = 0.7;
        check("total_loss",
              [mae, gt, lc](Tape* t, std::vector<Tensor>& in) {
                  return total_loss(t, in[0], gt, mae, lc);
              },
              {pred});
    }

    std::string report = "GPRT1\nop,max_rel_error,coords,status\n";
    bool all_ok = true;
    for (const OpCheck& c : checks) {
        all_ok = all_ok && c.result.ok;
        std::printf("%-20s max rel err %.3e  over %lld coords  %s\n", c.name.c_str(),
                    c.result.max_rel_error, static_cast<long long>(c.result.coords_checked),
                    c.result.ok ? "PASS" : "FAIL");
        report += c.name + "," + format_double(c.result.max_rel_error) + "," +
                  std::to_string(c.result.coords_checked) + "," +
                  (c.result.ok ? "PASS" : "FAIL") + "\n";
    }
    write_file(output_dir(cli) / "gradcheck_report.txt", report);
    std::printf("%s\n", all_ok ? "all gradient checks passed" : "gradient checks FAILED");
    return all_ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

int run_compare(const Cli& cli) {
    if (cli.positional.empty()) {
        throw ConfigError("compare needs at least one report path");
    }
    std::vector<RunReport> reports;
    for (const std::string& path : cli.positional) reports.push_back(load_report(path));
    const ComparisonTable table = compare_runs(reports);
    const std::filesystem::path out = output_dir(cli);
    const std::string text = comparison_text(table);
    write_file(out / "comparison.txt", text);
    write_file(out / "comparison.csv", comparison_csv(table));
    std::fputs(text.c_str(), stdout);
    std::printf("comparison written to %s\n", (out / "comparison.csv").string().c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        const Cli cli = parse_cli(argc, argv);
        if (cli.subcommand == "pretrain-mae") return run_pretrain(cli);
        if (cli.subcommand == "train") return run_train(cli);
        if (cli.subcommand == "eval") return run_eval(cli);
        if (cli.subcommand == "metrics") return run_metrics(cli);
        if (cli.subcommand == "fit-niqe") return run_fit_niqe(cli);
        if (cli.subcommand == "gradcheck") return run_gradcheck(cli);
        if (cli.subcommand == "compare") return run_compare(cli);
        std::fprintf(stderr, "unknown subcommand '%s'\n\n%s", cli.subcommand.c_str(), kUsage);
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
