#pragma once

#include <functional>
#include <string>
#include <vector>

#include "advlab/classifier.hpp"
#include "advlab/dataset.hpp"
#include "advlab/image.hpp"
#include "advlab/rng.hpp"

namespace advlab {

// Two fixed layouts over 32x32x3 inputs:
//   a: conv3x3x16 / relu / pool2 / conv3x3x32 / relu / pool2 / fc
//   b: conv3x3x24 / relu / pool2 / conv3x3x48 / relu / pool2 / conv3x3x48 / relu / fc
// All convs are stride 1, zero padding 1.
enum class ArchId { A, B };

struct ConvStage {
    int in_c = 0, out_c = 0;
    bool pool = false; // 2x2 max-pool after relu
};

struct Architecture {
    ArchId id = ArchId::A;
    int num_classes = 10;
    int input_h = 32, input_w = 32, input_c = 3;

    std::vector<ConvStage> stages() const;
    int fc_inputs() const;
};

Architecture make_architecture(ArchId id, int num_classes);
ArchId parse_arch(const std::string& name); // "a" | "b"

// Master copy of the weights is float32 (the checkpoint precision); all
// forward/backward arithmetic upcasts to double.
struct ModelParams {
    Architecture arch;
    std::vector<std::vector<float>> conv_w; // [stage]: out_c x 3 x 3 x in_c
    std::vector<std::vector<float>> conv_b; // [stage]: out_c
    std::vector<float> fc_w;                // num_classes x fc_inputs
    std::vector<float> fc_b;                // num_classes

    bool same_shape(const ModelParams& o) const;
};

// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases.
ModelParams init_params(const Architecture& arch, SeedStream stream);

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    bool augment = true; // random 0.9-side crops + horizontal flips
};

// Optional per-example dataset transform (applied once, at load).
using ExampleTransform = std::function<Image(const Image&, SeedStream)>;

struct TrainResult {
    ModelParams params;
    std::vector<double> epoch_losses; // mean cross-entropy per epoch
};

TrainResult train(const Architecture& arch, const Dataset& data, const TrainConfig& cfg,
                  const ExampleTransform* transform = nullptr);

// Checkpoint: versioned header + named tensor sections in the shared tensor
// format. Conv weights are stored as (H=out_c, W=9, C=in_c) tensors.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// Single-image views over the batched classifier.
std::vector<double> forward(const ModelParams& params, const Image& x);
int predict(const ModelParams& params, const Image& x);
std::pair<double, std::vector<double>> loss_and_input_gradient(const ModelParams& params,
                                                               const Image& x, int y);
std::vector<double> logit_gradient(const ModelParams& params, const Image& x, int k);

class SmallNet : public Classifier {
public:
    explicit SmallNet(ModelParams params);

    int num_classes() const override { return params_.arch.num_classes; }
    int input_height() const override { return params_.arch.input_h; }
    int input_width() const override { return params_.arch.input_w; }
    int input_channels() const override { return params_.arch.input_c; }

    void logits_batch(const double* xs, int n, double* logits_out) const override;
    void loss_grad_batch(const double* xs, const int* labels, int n, double* losses_out,
                         double* grads_out) const override;
    void logit_grad_batch(const double* xs, const int* ks, int n,
                          double* grads_out) const override;

    // Training path: mean loss over the batch plus parameter gradients.
    struct ParamGrads {
        std::vector<std::vector<double>> conv_w, conv_b;
        std::vector<double> fc_w, fc_b;
    };
    double param_grad_batch(const double* xs, const int* labels, int n, ParamGrads& grads) const;

    const ModelParams& params() const { return params_; }

    // Double mirrors of the float masters (what the arithmetic actually uses).
    const std::vector<std::vector<double>>& conv_w_d() const { return conv_w_d_; }
    const std::vector<std::vector<double>>& conv_b_d() const { return conv_b_d_; }
    const std::vector<double>& fc_w_d() const { return fc_w_d_; }
    const std::vector<double>& fc_b_d() const { return fc_b_d_; }

private:
    ModelParams params_;
    std::vector<std::vector<double>> conv_w_d_, conv_b_d_;
    std::vector<double> fc_w_d_, fc_b_d_;
    void refresh_mirrors();
};

} // namespace advlab
