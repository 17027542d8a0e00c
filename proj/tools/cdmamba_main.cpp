// cdmamba command-line entry point: train, eval, predict, gradcheck, synth.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "cdmamba/checkpoint.hpp"
#include "cdmamba/config.hpp"
#include "cdmamba/data.hpp"
#include "cdmamba/error.hpp"
#include "cdmamba/render.hpp"
#include "cdmamba/train.hpp"
#include "cdmamba/verify.hpp"

namespace fs = std::filesystem;
using namespace cdmamba;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kVerify = 3 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
    std::string data;
    std::string scope = "all";
    bool ablate = false;
};

RunConfig resolve(const Options& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
    if (o.seed) cfg.set("seed", std::to_string(*o.seed));
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (!o.checkpoint.empty()) cfg.checkpoint = o.checkpoint;
    if (!o.data.empty()) {
        cfg.data_dir = o.data;
        cfg.synthetic = false;
    }
    cfg.validate();
    return cfg;
}

std::vector<SamplePair> load_dataset(const RunConfig& cfg, bool require_labels) {
    std::vector<SamplePair> raw;
    if (cfg.synthetic) {
        raw = synth_generate(cfg.n, cfg.size, cfg.seed);
    } else {
        if (cfg.data_dir.empty()) throw ConfigError("no dataset: set data_dir (or --data) or synthetic = true");
        const auto all = list_pair_ids(cfg.data_dir);
        std::vector<std::string> ids = all;
        if (cfg.split != "all") {
            const auto manifest = SplitManifest::read(cfg.data_dir);
            manifest.validate(all);
            ids = cfg.split == "train" ? manifest.train : cfg.split == "val" ? manifest.val : manifest.test;
        }
        for (const auto& id : ids) {
            if (require_labels || has_label(cfg.data_dir, id)) {
                raw.push_back(load_pair(cfg.data_dir, id, cfg.strict_labels));
            } else {
                raw.push_back(load_unlabeled_pair(cfg.data_dir, id));
            }
        }
        if (raw.empty()) throw DataError("dataset '" + cfg.data_dir + "' (split " + cfg.split + ") has no samples");
    }
    if (cfg.patch == 0) return raw;
    std::vector<SamplePair> out;
    for (const auto& p : raw)
        for (auto& q : patch_split(p, cfg.patch)) out.push_back(std::move(q));
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write '" + path.string() + "'");
    os << text;
}

std::string percent(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * x);
    return buf;
}

std::string report(const EvalResult& r) {
    const Metrics& m = r.metrics;
    std::string s = "samples: " + std::to_string(r.samples) + "\n";
    s += "degenerate masks: " + std::to_string(r.degenerate_samples) + "\n";
    s += "Pre. / Rec. / F1 / IoU / OA: " + percent(m.precision) + " / " + percent(m.recall) + " / " + percent(m.f1) +
         " / " + percent(m.iou) + " / " + percent(m.oa) + "\n";
    if (m.degenerate) s += "note: at least one metric had a zero denominator and is reported as 0.00\n";
    return s;
}

// Trains one configuration into `dir`; returns the final-model train-set evaluation.
EvalResult train_into(const RunConfig& cfg, const fs::path& dir, const std::vector<SamplePair>& data, bool verbose) {
    fs::create_directories(dir);
    write_text(dir / "config.resolved.txt", resolved_text(cfg));
    CdMamba model = CdMamba::init(cfg.model, cfg.seed);
    std::ofstream log(dir / "train_log.csv");
    if (!log) throw DataError("cannot write '" + (dir / "train_log.csv").string() + "'");
    log << log_header() << "\n";
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result = train(model, data, cfg.train, [&](const EpochRecord& r) {
        log << log_line(r) << "\n" << std::flush;
        if (verbose) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::fprintf(stderr, "epoch %zu/%zu  loss %.5f  F1 %.4f  (%.1fs)\n", r.epoch, cfg.train.epochs, r.total,
                         r.metrics.f1, secs);
        }
    });
    save_checkpoint((dir / "final.ckpt").string(), model, cfg);
    EvalResult final_eval = evaluate(model, data);
    restore(model, result.best);
    save_checkpoint((dir / "best.ckpt").string(), model, cfg);
    if (verbose) {
        std::fprintf(stderr, "steps %zu, best epoch %zu (F1 %.4f)\n", result.steps, result.best_epoch, result.best_f1);
    }
    return final_eval;
}

int cmd_train(const Options& o) {
    const RunConfig cfg = resolve(o);
    const auto data = load_dataset(cfg, true);
    const fs::path out(cfg.out_dir);
    if (!o.ablate) {
        const EvalResult r = train_into(cfg, out, data, true);
        std::cout << "final model on training set\n" << report(r);
        std::cout << "wrote " << (out / "best.ckpt").string() << ", " << (out / "final.ckpt").string() << ", "
                  << (out / "train_log.csv").string() << "\n";
        return kOk;
    }
    fs::create_directories(out);
    std::ofstream csv(out / "ablation.csv");
    if (!csv) throw DataError("cannot write '" + (out / "ablation.csv").string() + "'");
    csv << "group,variant,parameters,Pre,Rec,F1,IoU,OA\n";
    for (const auto& v : ablation_variants(cfg)) {
        std::cerr << "== " << v.group << " " << v.name << "\n";
        std::string slug = v.group + "_" + v.name;
        for (auto& c : slug)
            if (c == '/' || c == ' ') c = '_';
        const EvalResult r = train_into(v.config, out / slug, data, false);
        const auto params = CdMamba::init(v.config.model, v.config.seed).parameter_count();
        const Metrics& m = r.metrics;
        csv << v.group << "," << v.name << "," << params << "," << percent(m.precision) << "," << percent(m.recall) << ","
            << percent(m.f1) << "," << percent(m.iou) << "," << percent(m.oa) << "\n"
            << std::flush;
    }
    std::cout << "wrote " << (out / "ablation.csv").string() << "\n";
    return kOk;
}

CdMamba model_for(const RunConfig& cfg, const Options& o) {
    if (cfg.checkpoint.empty()) throw ConfigError("no checkpoint: pass --checkpoint or set checkpoint in the config");
    if (o.config.empty()) return load_checkpoint(cfg.checkpoint).model;
    // An explicit config decides the architecture; the file must match it.
    CdMamba model = CdMamba::init(cfg.model, cfg.seed);
    load_weights(cfg.checkpoint, model);
    return model;
}

int cmd_eval(const Options& o) {
    RunConfig cfg = resolve(o);
    if (o.config.empty() && !cfg.checkpoint.empty()) {
        // Dataset settings come from the run that produced the checkpoint.
        RunConfig embedded = load_checkpoint(cfg.checkpoint).config;
        embedded.checkpoint = cfg.checkpoint;
        if (!o.data.empty()) {
            embedded.data_dir = o.data;
            embedded.synthetic = false;
        }
        if (!o.out.empty()) embedded.out_dir = o.out;
        cfg = embedded;
    }
    const CdMamba model = model_for(cfg, o);
    const auto data = load_dataset(cfg, true);
    const EvalResult r = evaluate(model, data);
    const std::string text = report(r);
    std::cout << text;
    fs::create_directories(cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "metrics.txt", text);
    return kOk;
}

int cmd_predict(const Options& o) {
    const RunConfig cfg = resolve(o);
    const CdMamba model = model_for(cfg, o);
    const auto data = load_dataset(cfg, false);
    const EvalResult r = evaluate(model, data);
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    std::size_t overlays = 0, missing = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        write_png((out / (data[i].id + "_mask.png")).string(), mask_image(r.predictions[i]));
        if (data[i].gt.data.empty()) {
            ++missing;
            continue;
        }
        write_png((out / (data[i].id + "_overlay.png")).string(), confusion_overlay(r.predictions[i], data[i].gt));
        ++overlays;
    }
    std::cout << "wrote " << data.size() << " masks and " << overlays << " overlays to " << out.string() << "\n";
    if (missing) std::cout << "notice: " << missing << " samples have no label; overlays skipped for them\n";
    return kOk;
}

int cmd_gradcheck(const Options& o) {
    std::vector<GradScope> scopes;
    if (o.scope == "all") {
        scopes = {GradScope::Primitives, GradScope::Ssm, GradScope::Blocks, GradScope::Model};
    } else {
        scopes = {parse_grad_scope(o.scope)};
    }
    const std::uint64_t seed = o.seed.value_or(0);
    bool ok = true;
    for (auto scope : scopes) {
        double worst = 0;
        for (const auto& item : run_gradcheck(scope, seed)) {
            std::printf("%-11s %-22s max_rel_err %.3e  tol %.0e  coords %6zu  %s\n", to_string(scope),
                        item.component.c_str(), item.max_rel_error, item.tolerance, item.coords,
                        item.passed() ? "PASS" : "FAIL");
            worst = std::max(worst, item.max_rel_error);
            ok = ok && item.passed();
        }
        std::printf("%-11s worst %.3e (tol %.0e)\n", to_string(scope), worst, scope_tolerance(scope));
    }
    std::printf("%s\n", ok ? "gradcheck passed" : "gradcheck FAILED");
    return ok ? kOk : kVerify;
}

int cmd_synth(const Options& o) {
    RunConfig cfg = resolve(o);
    const auto data = synth_generate(cfg.n, cfg.size, cfg.seed);
    SplitManifest manifest;
    // 8:1:1, the proportions of the usual dataset splits
    const std::size_t n_val = data.size() / 10, n_test = data.size() / 10;
    for (std::size_t i = 0; i < data.size(); ++i) {
        write_pair(cfg.out_dir, data[i]);
        auto& list = i < data.size() - n_val - n_test ? manifest.train : i < data.size() - n_test ? manifest.val : manifest.test;
        list.push_back(data[i].id);
    }
    manifest.write(cfg.out_dir);
    std::cout << "wrote " << data.size() << " pairs of " << cfg.size << "x" << cfg.size << " to " << cfg.out_dir << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CDMamba change detection"};
    app.require_subcommand(1);
    Options o;
    auto common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config, "key = value run configuration");
        sub->add_option("--seed", o.seed, "overrides the config seed");
        sub->add_option("--out", o.out, "output directory");
    };
    auto* train_cmd = app.add_subcommand("train", "train a model");
    common(train_cmd);
    train_cmd->add_option("--data", o.data, "dataset directory (A/, B/, label/)");
    train_cmd->add_flag("--ablate", o.ablate, "sweep the ablation settings and write ablation.csv");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    common(eval_cmd);
    eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file");
    eval_cmd->add_option("--data", o.data, "dataset directory");
    auto* predict_cmd = app.add_subcommand("predict", "write predicted masks and confusion overlays");
    common(predict_cmd);
    predict_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file");
    predict_cmd->add_option("--data", o.data, "directory of pairs (label/ optional)");
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    common(grad_cmd);
    grad_cmd->add_option("--scope", o.scope, "primitives, ssm, blocks, model or all")
        ->check(CLI::IsMember({"primitives", "ssm", "blocks", "model", "all"}));
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset");
    common(synth_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*train_cmd) return cmd_train(o);
        if (*eval_cmd) return cmd_eval(o);
        if (*predict_cmd) return cmd_predict(o);
        if (*grad_cmd) return cmd_gradcheck(o);
        if (*synth_cmd) return cmd_synth(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kData;
    } catch (const NonFiniteError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kVerify;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
    return kUsage;
}
