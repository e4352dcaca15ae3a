#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "advlab/attacks.hpp"
#include "advlab/classifier.hpp"
#include "advlab/defense.hpp"
#include "advlab/net.hpp"

namespace advlab {

double attack_success_rate(const Classifier& model, const std::vector<Image>& originals,
                           const std::vector<Image>& adversarials);

// Top-1 accuracy of predict(model, g(x)) against the labels. Stochastic
// defenses draw per-image streams seed.child(image_index).
double defended_accuracy(const Classifier& model, const DefenseChain& chain,
                         const std::vector<Image>& batch, const std::vector<int>& labels,
                         SeedStream seed);

// Class probabilities for one defended prediction; stream must be specific to
// (image, repetition).
std::vector<double> defended_probs(const Classifier& model, const DefenseChain& chain,
                                   const Image& x, SeedStream stream);

struct EnsembleEntry {
    const Classifier* model = nullptr;
    DefenseChain chain;
    double weight = 1.0;
    int repetitions = 1; // stochastic defenses re-drawn per repetition, each at `weight`
};

struct DefenseEnsemble {
    std::vector<EnsembleEntry> entries;
    // When > 0, predictions for every entry are averaged over this many
    // random crops of the transformed image.
    int crop_average = 0;
    CropConfig crop{};
};

// Validates the weights (sum over entries of weight*repetitions == 1 within
// 1e-9, all positive) and returns the weighted mean of the defended softmax
// outputs. stream must be specific to the image.
std::vector<double> ensemble_predict(const DefenseEnsemble& ensemble, const Image& x,
                                     SeedStream stream);

double ensemble_accuracy(const DefenseEnsemble& ensemble, const std::vector<Image>& batch,
                         const std::vector<int>& labels, SeedStream seed);

enum class PipelineSetting {
    GrayboxTestTime,          // attacker == defender == clean-trained model
    BlackboxTransformTrained, // attacker clean, defender transform-trained
    GrayboxTransformTrained   // attacker == defender == transform-trained
};

PipelineSetting parse_pipeline(const std::string& name);
std::string pipeline_name(PipelineSetting s);

struct PipelineSpec {
    PipelineSetting setting = PipelineSetting::GrayboxTestTime;
    std::string attacker_ckpt, defender_ckpt;
    std::string defense_spec; // chain grammar, see defense.hpp
    std::string db_path;      // patch database, when the chain quilts
    AttackConfig attack{};
    std::vector<double> targets; // target dissimilarities; a 0 row is always emitted
    std::string data_dir;
    int cal_n = 64;   // calibration split: first cal_n images of the dataset
    int eval_n = 128; // evaluation split: the next eval_n images
    std::uint64_t seed = 0;
};

struct EvalRow {
    std::string attack, defense, pipeline;
    double target_dissim = 0.0, achieved_dissim = 0.0;
    double top1_acc = 0.0, success_rate = 0.0, clean_acc = 0.0;
    std::uint64_t seed = 0;

    // Derived, not stored: calibration drifted beyond +-2% of target.
    bool calibration_flag() const;
};

struct EvalReport {
    std::vector<EvalRow> rows;
};

// Caches shared across pipeline invocations in one process: checkpoints,
// patch databases, calibrated knobs, adversarial batches. Purely memoization;
// results are identical with a cold cache.
struct EvalContext {
    std::map<std::string, std::shared_ptr<SmallNet>> models;
    std::map<std::string, std::shared_ptr<PatchDatabase>> databases;
    std::map<std::string, std::pair<AttackConfig, double>> calibrations;
    std::map<std::string, std::shared_ptr<AttackResult>> attacks;

    const SmallNet& model(const std::string& ckpt_path);
    const PatchDatabase* database(const std::string& path); // nullptr for empty path
};

EvalReport run_pipeline(const PipelineSpec& spec, EvalContext& ctx);

EvalRow run_transfer(const std::string& attacker_ckpt, const std::string& defender_ckpt,
                     const AttackConfig& attack, const std::string& defense_spec,
                     const std::string& db_path, const std::string& data_dir, double target,
                     std::uint64_t seed, EvalContext& ctx, int cal_n = 64, int eval_n = 128);

// CSV columns: attack,defense,pipeline,target_dissim,achieved_dissim,
// top1_acc,success_rate,clean_acc,seed
void emit_report_csv(const EvalReport& report, const std::string& path);
EvalReport parse_report_csv(const std::string& path);

// One `<attack>__<defense>.csv` series per (attack, defense), rows
// `dissim,top1_acc` sorted by dissimilarity ascending.
void emit_plotdata(const EvalReport& report, const std::string& dir);

} // namespace advlab
