#pragma once

// Test doubles: a dense linear classifier with hand-set weights, small enough
// to reason about analytically.

#include <vector>

#include "advlab/classifier.hpp"

namespace advlab::testing {

class LinearModel : public Classifier {
public:
    // logits = W x + b, W is num_classes x dim over a (h, w, c) input.
    LinearModel(int h, int w, int c, std::vector<std::vector<double>> weights,
                std::vector<double> bias)
        : h_(h), w_(w), c_(c), weights_(std::move(weights)), bias_(std::move(bias)) {}

    int num_classes() const override { return int(bias_.size()); }
    int input_height() const override { return h_; }
    int input_width() const override { return w_; }
    int input_channels() const override { return c_; }

    void logits_batch(const double* xs, int n, double* out) const override {
        int d = input_dim(), nc = num_classes();
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < nc; ++k) {
                double s = bias_[k];
                for (int j = 0; j < d; ++j) s += weights_[k][j] * xs[i * d + j];
                out[i * nc + k] = s;
            }
    }

    void loss_grad_batch(const double* xs, const int* labels, int n, double* losses,
                         double* grads) const override {
        int d = input_dim(), nc = num_classes();
        std::vector<double> z(nc), p(nc);
        for (int i = 0; i < n; ++i) {
            logits_batch(xs + std::size_t(i) * d, 1, z.data());
            softmax(z.data(), nc, p.data());
            double m = z[0];
            for (int k = 1; k < nc; ++k) m = std::max(m, z[k]);
            double lse = 0.0;
            for (int k = 0; k < nc; ++k) lse += std::exp(z[k] - m);
            losses[i] = std::log(lse) + m - z[labels[i]];
            for (int j = 0; j < d; ++j) {
                double g = 0.0;
                for (int k = 0; k < nc; ++k)
                    g += (p[k] - (k == labels[i] ? 1.0 : 0.0)) * weights_[k][j];
                grads[std::size_t(i) * d + j] = g;
            }
        }
    }

    void logit_grad_batch(const double*, const int* ks, int n, double* grads) const override {
        int d = input_dim();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) grads[std::size_t(i) * d + j] = weights_[ks[i]][j];
    }

private:
    int h_, w_, c_;
    std::vector<std::vector<double>> weights_;
    std::vector<double> bias_;
};

} // namespace advlab::testing
