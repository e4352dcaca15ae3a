#include "advlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "advlab/dataset.hpp"
#include "advlab/errors.hpp"
#include "advlab/format.hpp"
#include "advlab/parallel.hpp"

namespace fs = std::filesystem;

namespace advlab {

namespace {

// Seed-stream tags for the evaluation protocol.
constexpr std::uint64_t kTagDefense = 100;

std::string ckpt_stem(const std::string& path) { return fs::path(path).stem().string(); }

std::string attack_cfg_key(const AttackConfig& a) {
    return attack_method_name(a.method) + ";M=" + std::to_string(a.iterations) +
           ";k=" + fmt_double(a.kappa) + ";lf=" + fmt_double(a.lambda_f) +
           ";oi=" + std::to_string(a.opt_iterations) + ";olr=" + fmt_double(a.opt_lr) +
           ";os=" + fmt_double(a.overshoot);
}

} // namespace

double attack_success_rate(const Classifier& model, const std::vector<Image>& originals,
                           const std::vector<Image>& adversarials) {
    if (originals.empty()) throw InvalidInputError("attack_success_rate: empty batch");
    if (originals.size() != adversarials.size())
        throw InvalidInputError("attack_success_rate: batch length mismatch");
    std::vector<int> p0 = predict_batch(model, originals);
    std::vector<int> p1 = predict_batch(model, adversarials);
    int flipped = 0;
    for (std::size_t i = 0; i < p0.size(); ++i)
        if (p0[i] != p1[i]) ++flipped;
    return double(flipped) / double(p0.size());
}

std::vector<double> defended_probs(const Classifier& model, const DefenseChain& chain,
                                   const Image& x, SeedStream stream) {
    Image g = apply_chain_transforms(chain, x, stream);
    if (chain.crop_ensemble)
        return crop_ensemble_predict(model, g, chain.crop, stream.child(chain.steps.size()));
    std::vector<double> z = classifier_logits(model, g);
    std::vector<double> probs(z.size());
    softmax(z.data(), int(z.size()), probs.data());
    return probs;
}

double defended_accuracy(const Classifier& model, const DefenseChain& chain,
                         const std::vector<Image>& batch, const std::vector<int>& labels,
                         SeedStream seed) {
    if (batch.empty()) throw InvalidInputError("defended_accuracy: empty batch");
    if (batch.size() != labels.size())
        throw InvalidInputError("defended_accuracy: label count mismatch");
    std::vector<std::uint8_t> correct(batch.size(), 0);
    parallel_for(batch.size(), [&](std::size_t i) {
        std::vector<double> probs = defended_probs(model, chain, batch[i], seed.child(i));
        correct[i] =
            argmax_lowest(probs.data(), int(probs.size())) == labels[i] ? 1 : 0;
    });
    int n_correct = 0;
    for (std::uint8_t c : correct) n_correct += c;
    return double(n_correct) / double(batch.size());
}

std::vector<double> ensemble_predict(const DefenseEnsemble& ensemble, const Image& x,
                                     SeedStream stream) {
    if (ensemble.entries.empty()) throw InvalidInputError("ensemble: no entries");
    double total = 0.0;
    for (const EnsembleEntry& e : ensemble.entries) {
        if (e.weight <= 0.0) throw InvalidInputError("ensemble: weights must be positive");
        if (e.repetitions < 1) throw InvalidInputError("ensemble: repetitions must be >= 1");
        if (!e.model) throw InvalidInputError("ensemble: entry without model");
        total += e.weight * e.repetitions;
    }
    if (std::fabs(total - 1.0) > 1e-9)
        throw InvalidInputError("ensemble: weights must sum to 1 (got " + fmt_double(total) +
                                ")");
    int nc = ensemble.entries[0].model->num_classes();
    std::vector<double> mean(nc, 0.0);
    for (std::size_t ei = 0; ei < ensemble.entries.size(); ++ei) {
        const EnsembleEntry& e = ensemble.entries[ei];
        for (int rep = 0; rep < e.repetitions; ++rep) {
            SeedStream s = stream.child(ei, std::uint64_t(rep));
            std::vector<double> probs;
            if (ensemble.crop_average > 0) {
                Image g = apply_chain_transforms(e.chain, x, s);
                CropConfig cc = ensemble.crop;
                cc.num_crops = ensemble.crop_average;
                probs = crop_ensemble_predict(*e.model, g, cc, s.child(e.chain.steps.size()));
            } else {
                probs = defended_probs(*e.model, e.chain, x, s);
            }
            for (int k = 0; k < nc; ++k) mean[k] += e.weight * probs[k];
        }
    }
    return mean;
}

double ensemble_accuracy(const DefenseEnsemble& ensemble, const std::vector<Image>& batch,
                         const std::vector<int>& labels, SeedStream seed) {
    if (batch.empty() || batch.size() != labels.size())
        throw InvalidInputError("ensemble_accuracy: bad batch");
    std::vector<std::uint8_t> correct(batch.size(), 0);
    parallel_for(batch.size(), [&](std::size_t i) {
        std::vector<double> probs = ensemble_predict(ensemble, batch[i], seed.child(i));
        correct[i] =
            argmax_lowest(probs.data(), int(probs.size())) == labels[i] ? 1 : 0;
    });
    int n_correct = 0;
    for (std::uint8_t c : correct) n_correct += c;
    return double(n_correct) / double(batch.size());
}

PipelineSetting parse_pipeline(const std::string& name) {
    if (name == "graybox") return PipelineSetting::GrayboxTestTime;
    if (name == "blackbox") return PipelineSetting::BlackboxTransformTrained;
    if (name == "graybox-trained") return PipelineSetting::GrayboxTransformTrained;
    throw InvalidInputError("unknown pipeline: " + name);
}

std::string pipeline_name(PipelineSetting s) {
    switch (s) {
        case PipelineSetting::GrayboxTestTime: return "graybox";
        case PipelineSetting::BlackboxTransformTrained: return "blackbox";
        case PipelineSetting::GrayboxTransformTrained: return "graybox-trained";
    }
    return "?";
}

bool EvalRow::calibration_flag() const {
    if (target_dissim == 0.0) return false;
    if (!std::isfinite(achieved_dissim)) return true;
    return std::fabs(achieved_dissim - target_dissim) > 0.02 * target_dissim;
}

const SmallNet& EvalContext::model(const std::string& ckpt_path) {
    auto it = models.find(ckpt_path);
    if (it == models.end())
        it = models.emplace(ckpt_path, std::make_shared<SmallNet>(load_checkpoint(ckpt_path)))
                 .first;
    return *it->second;
}

const PatchDatabase* EvalContext::database(const std::string& path) {
    if (path.empty()) return nullptr;
    auto it = databases.find(path);
    if (it == databases.end())
        it = databases
                 .emplace(path, std::make_shared<PatchDatabase>(load_patch_database(path)))
                 .first;
    return it->second.get();
}

namespace {

struct SplitBatches {
    std::vector<Image> cal_images, eval_images;
    std::vector<int> cal_labels, eval_labels;
};

SplitBatches load_splits(const std::string& data_dir, int cal_n, int eval_n) {
    Dataset ds = load_dataset_dir(data_dir);
    if (int(ds.examples.size()) < cal_n + eval_n)
        throw InvalidInputError("dataset too small for calibration + evaluation splits");
    SplitBatches out;
    for (int i = 0; i < cal_n; ++i) {
        out.cal_images.push_back(ds.examples[i].image);
        out.cal_labels.push_back(ds.examples[i].label);
    }
    for (int i = cal_n; i < cal_n + eval_n; ++i) {
        out.eval_images.push_back(ds.examples[i].image);
        out.eval_labels.push_back(ds.examples[i].label);
    }
    return out;
}

} // namespace

EvalReport run_pipeline(const PipelineSpec& spec, EvalContext& ctx) {
    bool same_model = spec.attacker_ckpt == spec.defender_ckpt;
    if (spec.setting == PipelineSetting::GrayboxTestTime && !same_model)
        throw InvalidInputError("graybox pipeline requires attacker == defender checkpoint");
    if (spec.setting == PipelineSetting::GrayboxTransformTrained && !same_model)
        throw InvalidInputError(
            "graybox-trained pipeline requires attacker == defender checkpoint");
    if (spec.setting == PipelineSetting::BlackboxTransformTrained && same_model)
        throw InvalidInputError("blackbox pipeline requires distinct checkpoints");

    const SmallNet& attacker = ctx.model(spec.attacker_ckpt);
    const SmallNet& defender = ctx.model(spec.defender_ckpt);
    const PatchDatabase* db = ctx.database(spec.db_path);
    DefenseChain chain = parse_defense_chain(spec.defense_spec, db);
    SplitBatches split = load_splits(spec.data_dir, spec.cal_n, spec.eval_n);

    SeedStream root = SeedStream::root(spec.seed);
    SeedStream defense_seed = root.child(kTagDefense);

    double clean_acc = defended_accuracy(defender, chain, split.eval_images, split.eval_labels,
                                         defense_seed);

    EvalReport report;
    std::string pipeline = pipeline_name(spec.setting);
    std::string attack_name = attack_method_name(spec.attack.method);
    std::string defense_name = chain.name.empty() ? "none" : chain.name;

    EvalRow zero;
    zero.attack = attack_name;
    zero.defense = defense_name;
    zero.pipeline = pipeline;
    zero.target_dissim = 0.0;
    zero.achieved_dissim = 0.0;
    zero.top1_acc = clean_acc;
    zero.success_rate = 0.0;
    zero.clean_acc = clean_acc;
    zero.seed = spec.seed;
    report.rows.push_back(zero);

    std::vector<double> targets = spec.targets;
    std::sort(targets.begin(), targets.end());
    for (double target : targets) {
        if (target == 0.0) continue; // the clean row above
        EvalRow row = zero;
        row.target_dissim = target;
        std::string cal_key = spec.attacker_ckpt + "|" + attack_cfg_key(spec.attack) + "|t=" +
                              fmt_double(target) + "|" + spec.data_dir + "|cal" +
                              std::to_string(spec.cal_n);
        try {
            auto cal_it = ctx.calibrations.find(cal_key);
            if (cal_it == ctx.calibrations.end()) {
                double achieved_cal = 0.0;
                AttackConfig tuned =
                    calibrate_to_dissimilarity(spec.attack, attacker, split.cal_images,
                                               split.cal_labels, target, &achieved_cal);
                cal_it = ctx.calibrations.emplace(cal_key, std::make_pair(tuned, achieved_cal))
                             .first;
            }
            const AttackConfig& tuned = cal_it->second.first;
            std::string adv_key = cal_key + "|eval" + std::to_string(spec.eval_n);
            auto adv_it = ctx.attacks.find(adv_key);
            if (adv_it == ctx.attacks.end()) {
                auto res = std::make_shared<AttackResult>(
                    run_attack(attacker, split.eval_images, split.eval_labels, tuned));
                adv_it = ctx.attacks.emplace(adv_key, std::move(res)).first;
            }
            const AttackResult& adv = *adv_it->second;
            row.achieved_dissim = adv.dissimilarity;
            double flips = 0.0;
            for (std::uint8_t s : adv.success) flips += s;
            row.success_rate = flips / double(adv.success.size());
            row.top1_acc = defended_accuracy(defender, chain, adv.adversarial,
                                             split.eval_labels, defense_seed);
        } catch (const CalibrationError&) {
            // recorded per-row; the pipeline continues
            row.achieved_dissim = std::nan("");
            row.top1_acc = std::nan("");
            row.success_rate = std::nan("");
        }
        report.rows.push_back(row);
    }
    return report;
}

EvalRow run_transfer(const std::string& attacker_ckpt, const std::string& defender_ckpt,
                     const AttackConfig& attack, const std::string& defense_spec,
                     const std::string& db_path, const std::string& data_dir, double target,
                     std::uint64_t seed, EvalContext& ctx, int cal_n, int eval_n) {
    const SmallNet& attacker = ctx.model(attacker_ckpt);
    const SmallNet& defender = ctx.model(defender_ckpt);
    const PatchDatabase* db = ctx.database(db_path);
    DefenseChain chain = parse_defense_chain(defense_spec, db);
    SplitBatches split = load_splits(data_dir, cal_n, eval_n);
    SeedStream defense_seed = SeedStream::root(seed).child(kTagDefense);

    EvalRow row;
    row.attack = attack_method_name(attack.method);
    row.defense = chain.name.empty() ? "none" : chain.name;
    row.pipeline = "transfer:" + ckpt_stem(attacker_ckpt) + "->" + ckpt_stem(defender_ckpt);
    row.target_dissim = target;
    row.seed = seed;
    row.clean_acc = defended_accuracy(defender, chain, split.eval_images, split.eval_labels,
                                      defense_seed);
    if (target == 0.0) {
        row.achieved_dissim = 0.0;
        row.top1_acc = row.clean_acc;
        row.success_rate = 0.0;
        return row;
    }
    double achieved_cal = 0.0;
    AttackConfig tuned = calibrate_to_dissimilarity(attack, attacker, split.cal_images,
                                                    split.cal_labels, target, &achieved_cal);
    AttackResult adv = run_attack(attacker, split.eval_images, split.eval_labels, tuned);
    row.achieved_dissim = adv.dissimilarity;
    double flips = 0.0;
    for (std::uint8_t s : adv.success) flips += s;
    row.success_rate = flips / double(adv.success.size());
    row.top1_acc =
        defended_accuracy(defender, chain, adv.adversarial, split.eval_labels, defense_seed);
    return row;
}

void emit_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write report: " + path);
    out << "attack,defense,pipeline,target_dissim,achieved_dissim,top1_acc,success_rate,"
           "clean_acc,seed\n";
    for (const EvalRow& r : report.rows) {
        out << r.attack << "," << r.defense << "," << r.pipeline << ","
            << fmt_double(r.target_dissim) << "," << fmt_double(r.achieved_dissim) << ","
            << fmt_double(r.top1_acc) << "," << fmt_double(r.success_rate) << ","
            << fmt_double(r.clean_acc) << "," << r.seed << "\n";
    }
}

EvalReport parse_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read report: " + path);
    std::string line;
    if (!std::getline(in, line) ||
        line != "attack,defense,pipeline,target_dissim,achieved_dissim,top1_acc,success_rate,"
                "clean_acc,seed")
        throw FormatError("bad report header in " + path);
    EvalReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f[9];
        for (int i = 0; i < 9; ++i)
            if (!std::getline(ss, f[i], ',')) throw FormatError("short report row: " + line);
        EvalRow r;
        r.attack = f[0];
        r.defense = f[1];
        r.pipeline = f[2];
        r.target_dissim = std::strtod(f[3].c_str(), nullptr);
        r.achieved_dissim = std::strtod(f[4].c_str(), nullptr);
        r.top1_acc = std::strtod(f[5].c_str(), nullptr);
        r.success_rate = std::strtod(f[6].c_str(), nullptr);
        r.clean_acc = std::strtod(f[7].c_str(), nullptr);
        r.seed = std::strtoull(f[8].c_str(), nullptr, 10);
        report.rows.push_back(std::move(r));
    }
    return report;
}

void emit_plotdata(const EvalReport& report, const std::string& dir) {
    fs::create_directories(dir);
    std::set<std::pair<std::string, std::string>> series;
    for (const EvalRow& r : report.rows) series.insert({r.attack, r.defense});
    for (const auto& [attack, defense] : series) {
        std::vector<const EvalRow*> rows;
        for (const EvalRow& r : report.rows)
            if (r.attack == attack && r.defense == defense) rows.push_back(&r);
        std::sort(rows.begin(), rows.end(), [](const EvalRow* a, const EvalRow* b) {
            return a->target_dissim < b->target_dissim;
        });
        std::string name = attack + "__" + defense;
        for (char& ch : name)
            if (ch == ':' || ch == ',' || ch == '+' || ch == '/' || ch == '=') ch = '_';
        std::ofstream out(fs::path(dir) / (name + ".csv"));
        if (!out) throw FormatError("cannot write plotdata under " + dir);
        out << "dissim,top1_acc\n";
        for (const EvalRow* r : rows)
            out << fmt_double(r->target_dissim) << "," << fmt_double(r->top1_acc) << "\n";
    }
}

} // namespace advlab
