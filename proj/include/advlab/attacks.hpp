#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advlab/classifier.hpp"
#include "advlab/image.hpp"

namespace advlab {

enum class AttackMethod { FGSM, IFGSM, DEEPFOOL, CWL2 };

AttackMethod parse_attack_method(const std::string& name);
std::string attack_method_name(AttackMethod m);

struct AttackConfig {
    AttackMethod method = AttackMethod::FGSM;
    // Calibration knob: step size for FGSM/I-FGSM; step multiplier for
    // DeepFool; perturbation post-scale for CW-L2 (both >= 1).
    double epsilon = 0.01;
    int iterations = 10;   // M (I-FGSM default 10, DeepFool default 5)
    double kappa = 0.0;    // CW margin
    double lambda_f = 10.0; // CW tradeoff
    int opt_iterations = 100;
    double opt_lr = 0.001;
    double overshoot = 0.02; // DeepFool boundary-crossing slack
    double budget_rho = 0.0; // optional L2 cap per image, 0 = off
};

struct AttackResult {
    std::vector<Image> adversarial;
    std::vector<std::uint8_t> success; // prediction changed vs. clean input
    std::vector<double> l2, linf;      // per-image perturbation norms
    double dissimilarity = 0.0;        // normalized L2 over the batch
};

// Single-image attacks. All outputs are clipped to [0,1].
Image fgsm(const Classifier& model, const Image& x, int y, double eps);
Image ifgsm(const Classifier& model, const Image& x, int y, double eps, int m);
Image deepfool(const Classifier& model, const Image& x, double eps, int m,
               double overshoot = 0.02);
Image cw_l2(const Classifier& model, const Image& x, const AttackConfig& cfg);

// Batch driver with success/norm bookkeeping. Images are processed in fixed
// chunks so results do not depend on thread count.
AttackResult run_attack(const Classifier& model, const std::vector<Image>& xs,
                        const std::vector<int>& ys, const AttackConfig& cfg);

// Binary search over the method's knob until the batch dissimilarity is
// within +-2% relative of target or 20 bisections elapse. Throws
// CalibrationError when the target lies outside what the knob bounds reach.
AttackConfig calibrate_to_dissimilarity(const AttackConfig& cfg, const Classifier& model,
                                        const std::vector<Image>& batch,
                                        const std::vector<int>& labels, double target,
                                        double* achieved_out = nullptr);

// Adversarial batch directory: tensor files plus manifest.csv
// (`index,label,success,l2,linf`).
void save_attack_result(const AttackResult& result, const std::vector<int>& labels,
                        const std::string& dir);

} // namespace advlab
