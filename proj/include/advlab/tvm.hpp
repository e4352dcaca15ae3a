#pragma once

#include <cstdint>
#include <vector>

#include "advlab/image.hpp"
#include "advlab/rng.hpp"

namespace advlab {

// Bernoulli pixel-selection mask; 1 = maintained pixel.
struct DropoutMask {
    int height = 0, width = 0, channels = 0;
    double keep_prob = 1.0;
    std::vector<std::uint8_t> keep;

    std::uint8_t at(int y, int x, int c) const {
        return keep[(std::size_t(y) * width + x) * channels + c];
    }
};

struct TvmConfig {
    double lambda_tv = 0.03;
    int p = 2;              // norm order of the row/column difference vectors
    double keep_prob = 0.5; // pixel dropout keep probability
    double tolerance = 1e-6;
    int max_iterations = 500;
};

struct TvmSolution {
    Image z;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    // Raw per-outer-iteration objective (diagnostic). The returned z is the
    // best iterate seen, so solution quality is monotone in the budget even
    // where this raw sequence wiggles.
    std::vector<double> objective_trace;
};

DropoutMask sample_mask(int height, int width, int channels, double keep_prob,
                        SeedStream stream);

// Sum over channels of p-norms of whole row-difference and column-difference
// vectors (a group norm for p = 2, anisotropic for p = 1).
double tv_norm(const Image& z, int p);
double tv_norm_raw(const double* z, int h, int w, int c, int p);

// J(z) = ||mask .* (z - x)||_2 + lambda_tv * TV_p(z). Fidelity is unsquared
// and applies to the maintained pixels.
double tvm_objective(const Image& x, const DropoutMask& mask, const Image& z,
                     const TvmConfig& cfg);

// ADMM / split-Bregman solve of the objective above with auxiliary difference
// variables and block shrinkage; penalty 1.0, warm-started Gauss-Seidel inner
// sweeps. Final z is clipped to [0,1].
TvmSolution tvm_reconstruct(const Image& x, const DropoutMask& mask, const TvmConfig& cfg);

// sample_mask + tvm_reconstruct.
Image tvm_defense(const Image& x, const TvmConfig& cfg, SeedStream stream);

} // namespace advlab
