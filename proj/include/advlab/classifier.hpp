#pragma once

#include <cmath>
#include <vector>

#include "advlab/image.hpp"

namespace advlab {

// Minimal differentiable-classifier surface the attacks and the evaluation
// harness program against. Inputs are flat double tensors (H*W*C, channel
// innermost), one row per image.
class Classifier {
public:
    virtual ~Classifier() = default;

    virtual int num_classes() const = 0;
    virtual int input_height() const = 0;
    virtual int input_width() const = 0;
    virtual int input_channels() const = 0;

    int input_dim() const { return input_height() * input_width() * input_channels(); }

    // logits_out: n * num_classes
    virtual void logits_batch(const double* xs, int n, double* logits_out) const = 0;

    // Softmax cross-entropy per image and its exact gradient w.r.t. the input.
    // losses_out: n; grads_out: n * input_dim
    virtual void loss_grad_batch(const double* xs, const int* labels, int n, double* losses_out,
                                 double* grads_out) const = 0;

    // Gradient of logit ks[i] w.r.t. the input, per image.
    virtual void logit_grad_batch(const double* xs, const int* ks, int n,
                                  double* grads_out) const = 0;
};

// Argmax with ties broken by the lowest index.
inline int argmax_lowest(const double* v, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

inline void softmax(const double* logits, int n, double* probs) {
    double m = logits[0];
    for (int i = 1; i < n; ++i) m = std::max(m, logits[i]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        probs[i] = std::exp(logits[i] - m);
        s += probs[i];
    }
    for (int i = 0; i < n; ++i) probs[i] /= s;
}

std::vector<double> classifier_logits(const Classifier& c, const Image& x);
int classifier_predict(const Classifier& c, const Image& x);
std::vector<int> predict_batch(const Classifier& c, const std::vector<Image>& xs);

} // namespace advlab
