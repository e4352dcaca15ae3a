// Command-line front end: data generation, training, patch databases,
// attacks, defenses, and the evaluation pipelines.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "advlab/attacks.hpp"
#include "advlab/dataset.hpp"
#include "advlab/defense.hpp"
#include "advlab/errors.hpp"
#include "advlab/eval.hpp"
#include "advlab/net.hpp"
#include "advlab/parallel.hpp"
#include "advlab/tensor_io.hpp"

using namespace advlab;
namespace fs = std::filesystem;

namespace {

constexpr int kExitBadConfig = 2;
constexpr int kExitCalibration = 3;

struct SavedBatch {
    std::vector<Image> images;
    std::vector<std::string> manifest_rows;
};

SavedBatch load_attack_dir(const std::string& dir) {
    std::ifstream csv(fs::path(dir) / "manifest.csv");
    if (!csv) throw FormatError("missing manifest.csv under " + dir);
    SavedBatch out;
    std::string line;
    std::getline(csv, line); // header
    if (line != "index,label,success,l2,linf") throw FormatError("bad manifest header");
    std::size_t i = 0;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        char name[32];
        std::snprintf(name, sizeof(name), "adv_%05zu.atns", i++);
        out.images.push_back(load_tensor((fs::path(dir) / name).string()));
        out.manifest_rows.push_back(line);
    }
    if (out.images.empty()) throw FormatError("empty adversarial directory: " + dir);
    return out;
}

std::map<std::string, std::string> read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read config: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = value;
    }
    return kv;
}

std::string want(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw InvalidInputError("config key missing: " + key);
    return it->second;
}

std::string get_or(const std::map<std::string, std::string>& kv, const std::string& key,
                   const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

std::vector<double> parse_targets(const std::string& list) {
    std::vector<double> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::strtod(item.c_str(), nullptr));
    if (out.empty()) throw InvalidInputError("empty target list");
    return out;
}

AttackConfig attack_defaults(const std::string& method) {
    AttackConfig cfg;
    cfg.method = parse_attack_method(method);
    switch (cfg.method) {
        case AttackMethod::FGSM:
            cfg.epsilon = 0.02;
            break;
        case AttackMethod::IFGSM:
            cfg.epsilon = 0.005;
            cfg.iterations = 10;
            break;
        case AttackMethod::DEEPFOOL:
            cfg.epsilon = 2.0;
            cfg.iterations = 5;
            break;
        case AttackMethod::CWL2:
            cfg.epsilon = 2.0;
            cfg.kappa = 0.0;
            cfg.lambda_f = 10.0;
            cfg.opt_iterations = 100;
            cfg.opt_lr = 0.001;
            break;
    }
    return cfg;
}

int cmd_gen_data(const std::string& out, int classes, int per_class, std::uint64_t seed) {
    Dataset ds = generate_synthetic(classes, per_class, seed);
    write_dataset(ds, out);
    std::printf("wrote %zu images (%d classes) to %s\n", ds.examples.size(), classes,
                out.c_str());
    return 0;
}

int cmd_train(const std::string& data, const std::string& arch, const std::string& transform,
              const std::string& db_path, int epochs, int batch, double lr,
              std::uint64_t seed, bool no_augment, const std::string& out) {
    Dataset ds = load_dataset_dir(data);
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.learning_rate = lr;
    cfg.seed = seed;
    cfg.augment = !no_augment;

    PatchDatabase db;
    ExampleTransform hook;
    if (transform != "none") {
        const PatchDatabase* dbp = nullptr;
        if (transform.rfind("quilt", 0) == 0) {
            if (db_path.empty()) throw InvalidInputError("--transform quilt requires --db");
            db = load_patch_database(db_path);
            dbp = &db;
        }
        DefenseChain chain = parse_defense_chain(transform, dbp, /*materialize_crop=*/true);
        hook = [chain](const Image& img, SeedStream s) {
            return apply_chain_transforms(chain, img, s);
        };
    }
    Architecture a = make_architecture(parse_arch(arch), ds.num_classes);
    TrainResult r = train(a, ds, cfg, hook ? &hook : nullptr);
    save_checkpoint(r.params, out);
    std::printf("saved checkpoint %s (final epoch loss %.6f)\n", out.c_str(),
                r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back());
    return 0;
}

int cmd_build_db(const std::string& data, int patch, int count, std::uint64_t seed,
                 const std::string& out) {
    Dataset ds = load_dataset_dir(data);
    std::vector<Image> images;
    for (const LabeledExample& ex : ds.examples) images.push_back(ex.image);
    PatchDatabase db = build_patch_database(images, patch, count, seed);
    save_patch_database(db, out);
    std::printf("built %lld patches of %dx%d from %zu images -> %s\n",
                static_cast<long long>(db.count), patch, patch, images.size(), out.c_str());
    return 0;
}

int cmd_attack(const std::string& model_path, const std::string& method, double target,
               const std::string& data, int cal_n, int count, bool strict,
               const std::string& out) {
    SmallNet net(load_checkpoint(model_path));
    Dataset ds = load_dataset_dir(data);
    if (int(ds.examples.size()) < cal_n + count)
        throw InvalidInputError("dataset too small for calibration + attack batches");
    std::vector<Image> cal, batch;
    std::vector<int> cal_y, ys;
    for (int i = 0; i < cal_n; ++i) {
        cal.push_back(ds.examples[i].image);
        cal_y.push_back(ds.examples[i].label);
    }
    for (int i = cal_n; i < cal_n + count; ++i) {
        batch.push_back(ds.examples[i].image);
        ys.push_back(ds.examples[i].label);
    }
    AttackConfig cfg = attack_defaults(method);
    double achieved = 0.0;
    try {
        cfg = calibrate_to_dissimilarity(cfg, net, cal, cal_y, target, &achieved);
    } catch (const CalibrationError& e) {
        std::fprintf(stderr, "calibration failed: %s\n", e.what());
        if (strict) return kExitCalibration;
        throw;
    }
    AttackResult res = run_attack(net, batch, ys, cfg);
    save_attack_result(res, ys, out);
    double success = 0.0;
    for (auto s : res.success) success += s;
    std::printf("%s: knob %.6g, calibration dissim %.5f, batch dissim %.5f, success %.3f\n",
                method.c_str(), cfg.epsilon, achieved, res.dissimilarity,
                success / double(res.success.size()));
    return 0;
}

int cmd_defend(const std::string& in, const std::string& defense, const std::string& db_path,
               std::uint64_t seed, const std::string& out) {
    SavedBatch batch = load_attack_dir(in);
    PatchDatabase db;
    const PatchDatabase* dbp = nullptr;
    if (!db_path.empty()) {
        db = load_patch_database(db_path);
        dbp = &db;
    }
    DefenseChain chain = parse_defense_chain(defense, dbp, /*materialize_crop=*/true);
    fs::create_directories(out);
    SeedStream root = SeedStream::root(seed);
    std::vector<Image> transformed(batch.images.size());
    parallel_for(batch.images.size(), [&](std::size_t i) {
        transformed[i] = apply_chain_transforms(chain, batch.images[i], root.child(i));
    });
    std::ofstream csv(fs::path(out) / "manifest.csv");
    csv << "index,label,success,l2,linf\n";
    for (std::size_t i = 0; i < transformed.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "adv_%05zu.atns", i);
        save_tensor(transformed[i], (fs::path(out) / name).string());
        csv << batch.manifest_rows[i] << "\n";
    }
    std::printf("defended %zu images with '%s' -> %s\n", transformed.size(), defense.c_str(),
                out.c_str());
    return 0;
}

int cmd_eval(const std::string& pipeline, const std::string& config_path, bool strict,
             const std::string& out) {
    auto kv = read_config(config_path);
    EvalContext ctx;
    EvalReport report;
    std::uint64_t seed = std::strtoull(get_or(kv, "seed", "0").c_str(), nullptr, 10);
    int cal_n = std::stoi(get_or(kv, "cal_n", "64"));
    int eval_n = std::stoi(get_or(kv, "eval_n", "128"));

    if (pipeline == "transfer") {
        AttackConfig atk = attack_defaults(get_or(kv, "attack", "ifgsm"));
        for (double target : parse_targets(get_or(kv, "targets", want(kv, "target")))) {
            report.rows.push_back(run_transfer(
                want(kv, "attacker_model"), want(kv, "defender_model"), atk,
                get_or(kv, "defense", "none"), get_or(kv, "db", ""), want(kv, "data"), target,
                seed, ctx, cal_n, eval_n));
        }
    } else {
        PipelineSpec spec;
        spec.setting = parse_pipeline(pipeline);
        spec.attacker_ckpt = want(kv, "attacker_model");
        spec.defender_ckpt = spec.setting == PipelineSetting::BlackboxTransformTrained
                                 ? want(kv, "defender_model")
                                 : get_or(kv, "defender_model", spec.attacker_ckpt);
        spec.defense_spec = get_or(kv, "defense", "none");
        spec.db_path = get_or(kv, "db", "");
        spec.attack = attack_defaults(get_or(kv, "attack", "ifgsm"));
        spec.targets = parse_targets(get_or(kv, "targets", "0,0.02,0.04,0.06,0.08"));
        spec.data_dir = want(kv, "data");
        spec.cal_n = cal_n;
        spec.eval_n = eval_n;
        spec.seed = seed;
        report = run_pipeline(spec, ctx);
    }
    emit_report_csv(report, out);
    int flagged = 0;
    for (const EvalRow& r : report.rows) flagged += r.calibration_flag() ? 1 : 0;
    std::printf("wrote %zu rows to %s (%d calibration-flagged)\n", report.rows.size(),
                out.c_str(), flagged);
    if (strict && flagged > 0) return kExitCalibration;
    return 0;
}

int cmd_report(const std::string& in, const std::string& format, const std::string& out) {
    EvalReport report = parse_report_csv(in);
    if (format == "plotdata") {
        emit_plotdata(report, out);
        std::printf("wrote plot series to %s\n", out.c_str());
        return 0;
    }
    if (format == "csv") {
        emit_report_csv(report, out);
        return 0;
    }
    throw InvalidInputError("unknown report format: " + format);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarial-image defense laboratory"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic shape dataset");
    std::string gen_out;
    int gen_classes = 10, gen_per = 100;
    std::uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out)->required();
    gen->add_option("--classes", gen_classes);
    gen->add_option("--per-class", gen_per);
    gen->add_option("--seed", gen_seed);

    // train
    auto* tr = app.add_subcommand("train", "train a classifier checkpoint");
    std::string tr_data, tr_arch = "a", tr_transform = "none", tr_db, tr_out;
    int tr_epochs = 30, tr_batch = 64;
    double tr_lr = 0.01;
    std::uint64_t tr_seed = 0;
    bool tr_noaug = false;
    tr->add_option("--data", tr_data)->required();
    tr->add_option("--arch", tr_arch);
    tr->add_option("--transform", tr_transform);
    tr->add_option("--db", tr_db);
    tr->add_option("--epochs", tr_epochs);
    tr->add_option("--batch", tr_batch);
    tr->add_option("--lr", tr_lr);
    tr->add_option("--seed", tr_seed);
    tr->add_flag("--no-augment", tr_noaug);
    tr->add_option("--out", tr_out)->required();

    // build-db
    auto* bd = app.add_subcommand("build-db", "build a clean patch database");
    std::string bd_data, bd_out;
    int bd_patch = 5, bd_count = 100000;
    std::uint64_t bd_seed = 0;
    bd->add_option("--data", bd_data)->required();
    bd->add_option("--patch", bd_patch);
    bd->add_option("--count", bd_count);
    bd->add_option("--seed", bd_seed);
    bd->add_option("--out", bd_out)->required();

    // attack
    auto* at = app.add_subcommand("attack", "generate a calibrated adversarial batch");
    std::string at_model, at_method = "ifgsm", at_data, at_out;
    double at_target = 0.06;
    int at_cal = 64, at_count = 128;
    bool at_strict = false;
    at->add_option("--model", at_model)->required();
    at->add_option("--method", at_method);
    at->add_option("--target-dissim", at_target);
    at->add_option("--data", at_data)->required();
    at->add_option("--cal-n", at_cal);
    at->add_option("--count", at_count);
    at->add_flag("--strict", at_strict);
    at->add_option("--out", at_out)->required();

    // defend
    auto* de = app.add_subcommand("defend", "apply a defense chain to stored images");
    std::string de_in, de_defense, de_db, de_out;
    std::uint64_t de_seed = 0;
    de->add_option("--in", de_in)->required();
    de->add_option("--defense", de_defense)->required();
    de->add_option("--db", de_db);
    de->add_option("--seed", de_seed);
    de->add_option("--out", de_out)->required();

    // eval
    auto* ev = app.add_subcommand("eval", "run an evaluation pipeline from a config file");
    std::string ev_pipeline, ev_config, ev_out = "report.csv";
    bool ev_strict = false;
    ev->add_option("--pipeline", ev_pipeline)->required();
    ev->add_option("--config", ev_config)->required();
    ev->add_flag("--strict", ev_strict);
    ev->add_option("--out", ev_out);

    // report
    auto* re = app.add_subcommand("report", "convert a report CSV");
    std::string re_in, re_format = "plotdata", re_out;
    re->add_option("--in", re_in)->required();
    re->add_option("--format", re_format);
    re->add_option("--out", re_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_out, gen_classes, gen_per, gen_seed);
        if (tr->parsed())
            return cmd_train(tr_data, tr_arch, tr_transform, tr_db, tr_epochs, tr_batch, tr_lr,
                             tr_seed, tr_noaug, tr_out);
        if (bd->parsed()) return cmd_build_db(bd_data, bd_patch, bd_count, bd_seed, bd_out);
        if (at->parsed())
            return cmd_attack(at_model, at_method, at_target, at_data, at_cal, at_count,
                              at_strict, at_out);
        if (de->parsed()) return cmd_defend(de_in, de_defense, de_db, de_seed, de_out);
        if (ev->parsed()) return cmd_eval(ev_pipeline, ev_config, ev_strict, ev_out);
        if (re->parsed()) return cmd_report(re_in, re_format, re_out);
    } catch (const CalibrationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitCalibration;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitBadConfig;
    }
    return 0;
}
