#include "advlab/tvm.hpp"

#include <algorithm>
#include <cmath>

#include "advlab/errors.hpp"

namespace advlab {

DropoutMask sample_mask(int height, int width, int channels, double keep_prob,
                        SeedStream stream) {
    if (keep_prob <= 0.0 || keep_prob > 1.0)
        throw InvalidInputError("sample_mask: keep_prob must be in (0,1]");
    DropoutMask m;
    m.height = height;
    m.width = width;
    m.channels = channels;
    m.keep_prob = keep_prob;
    m.keep.resize(std::size_t(height) * width * channels);
    Rng rng(stream);
    for (std::uint8_t& v : m.keep) v = rng.bernoulli(keep_prob) ? 1 : 0;
    return m;
}

double tv_norm_raw(const double* z, int h, int w, int c, int p) {
    if (p != 1 && p != 2) throw InvalidInputError("tv_norm: p must be 1 or 2");
    auto val = [&](int y, int x, int k) { return z[(std::size_t(y) * w + x) * c + k]; };
    double total = 0.0;
    for (int k = 0; k < c; ++k) {
        for (int i = 1; i < h; ++i) { // row-difference vectors, length w
            double acc = 0.0;
            for (int x = 0; x < w; ++x) {
                double d = val(i, x, k) - val(i - 1, x, k);
                acc += p == 1 ? std::fabs(d) : d * d;
            }
            total += p == 1 ? acc : std::sqrt(acc);
        }
        for (int j = 1; j < w; ++j) { // column-difference vectors, length h
            double acc = 0.0;
            for (int y = 0; y < h; ++y) {
                double d = val(y, j, k) - val(y, j - 1, k);
                acc += p == 1 ? std::fabs(d) : d * d;
            }
            total += p == 1 ? acc : std::sqrt(acc);
        }
    }
    return total;
}

double tv_norm(const Image& z, int p) {
    std::vector<double> zd = to_doubles(z);
    return tv_norm_raw(zd.data(), z.height, z.width, z.channels, p);
}

namespace {

double sign_shrink(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

double masked_fidelity(const std::vector<double>& z, const std::vector<double>& x,
                       const DropoutMask& mask) {
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
        if (mask.keep[i]) {
            double d = z[i] - x[i];
            acc += d * d;
        }
    return std::sqrt(acc);
}

} // namespace

double tvm_objective(const Image& x, const DropoutMask& mask, const Image& z,
                     const TvmConfig& cfg) {
    if (!x.same_shape(z)) throw InvalidInputError("tvm_objective: shape mismatch");
    std::vector<double> xd = to_doubles(x), zd = to_doubles(z);
    return masked_fidelity(zd, xd, mask) +
           cfg.lambda_tv * tv_norm_raw(zd.data(), z.height, z.width, z.channels, cfg.p);
}

TvmSolution tvm_reconstruct(const Image& x, const DropoutMask& mask, const TvmConfig& cfg) {
    if (x.height != mask.height || x.width != mask.width || x.channels != mask.channels)
        throw InvalidInputError("tvm_reconstruct: mask shape mismatch");
    if (cfg.lambda_tv <= 0.0 || (cfg.p != 1 && cfg.p != 2) || cfg.tolerance <= 0.0 ||
        cfg.max_iterations < 1)
        throw InvalidInputError("tvm_reconstruct: bad config");

    const int h = x.height, w = x.width, c = x.channels;
    const std::size_t hwc = std::size_t(h) * w * c;
    const std::size_t nr = h > 1 ? std::size_t(h - 1) * w * c : 0; // row-gap variables
    const std::size_t nc_ = w > 1 ? std::size_t(h) * (w - 1) * c : 0;
    const double mu = 1.0; // ADMM penalty; shared by all three splits
    const int gs_sweeps = 3;
    const int min_iters = 20;

    std::vector<double> xd = to_doubles(x);
    std::vector<double> z = xd;
    std::vector<double> e(hwc, 0.0), be(hwc, 0.0);
    std::vector<double> dr(nr, 0.0), br(nr, 0.0), dc(nc_, 0.0), bc(nc_, 0.0);

    auto zi = [&](int y, int xx, int k) -> std::size_t {
        return (std::size_t(y) * w + xx) * c + k;
    };
    auto ri = [&](int gap, int xx, int k) -> std::size_t {
        return (std::size_t(gap) * w + xx) * c + k;
    };
    auto ci = [&](int y, int gap, int k) -> std::size_t {
        return (std::size_t(y) * (w - 1) + gap) * c + k;
    };

    // init difference variables at z = x
    for (int g = 0; g + 1 < h; ++g)
        for (int xx = 0; xx < w; ++xx)
            for (int k = 0; k < c; ++k) dr[ri(g, xx, k)] = xd[zi(g + 1, xx, k)] - xd[zi(g, xx, k)];
    for (int y = 0; y < h; ++y)
        for (int g = 0; g + 1 < w; ++g)
            for (int k = 0; k < c; ++k) dc[ci(y, g, k)] = xd[zi(y, g + 1, k)] - xd[zi(y, g, k)];

    std::vector<double> rhs(hwc);
    std::vector<double> best_z = z;
    double best_obj = masked_fidelity(z, xd, mask) +
                      cfg.lambda_tv * tv_norm_raw(z.data(), h, w, c, cfg.p);
    double prev_obj = best_obj;

    TvmSolution sol;
    sol.converged = false;
    int iter = 0;
    for (; iter < cfg.max_iterations; ++iter) {
        // rhs = mask.*(x + e - be) + Dr^T(dr - br) + Dc^T(dc - bc)
        for (std::size_t i = 0; i < hwc; ++i)
            rhs[i] = mask.keep[i] ? (xd[i] + e[i] - be[i]) : 0.0;
        for (int g = 0; g + 1 < h; ++g)
            for (int xx = 0; xx < w; ++xx)
                for (int k = 0; k < c; ++k) {
                    double u = dr[ri(g, xx, k)] - br[ri(g, xx, k)];
                    rhs[zi(g, xx, k)] -= u;
                    rhs[zi(g + 1, xx, k)] += u;
                }
        for (int y = 0; y < h; ++y)
            for (int g = 0; g + 1 < w; ++g)
                for (int k = 0; k < c; ++k) {
                    double u = dc[ci(y, g, k)] - bc[ci(y, g, k)];
                    rhs[zi(y, g, k)] -= u;
                    rhs[zi(y, g + 1, k)] += u;
                }
        // Gauss-Seidel sweeps on (diag(mask) + D^T D) z = rhs
        for (int sweep = 0; sweep < gs_sweeps; ++sweep)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    for (int k = 0; k < c; ++k) {
                        double num = rhs[zi(y, xx, k)];
                        int deg = 0;
                        if (y > 0) { num += z[zi(y - 1, xx, k)]; ++deg; }
                        if (y + 1 < h) { num += z[zi(y + 1, xx, k)]; ++deg; }
                        if (xx > 0) { num += z[zi(y, xx - 1, k)]; ++deg; }
                        if (xx + 1 < w) { num += z[zi(y, xx + 1, k)]; ++deg; }
                        double den = double(mask.keep[zi(y, xx, k)]) + double(deg);
                        if (den > 0.0) z[zi(y, xx, k)] = num / den;
                    }
        // e-step: global block shrinkage toward the masked residual
        {
            double vnorm = 0.0;
            for (std::size_t i = 0; i < hwc; ++i)
                if (mask.keep[i]) {
                    double v = z[i] - xd[i] + be[i];
                    vnorm += v * v;
                }
            vnorm = std::sqrt(vnorm);
            double s = vnorm > 0.0 ? std::max(0.0, 1.0 - 1.0 / (mu * vnorm)) : 0.0;
            for (std::size_t i = 0; i < hwc; ++i)
                e[i] = mask.keep[i] ? s * (z[i] - xd[i] + be[i]) : 0.0;
        }
        const double thresh = cfg.lambda_tv / mu;
        // dr-step: group (p=2) or elementwise (p=1) shrinkage per row gap
        for (int k = 0; k < c; ++k)
            for (int g = 0; g + 1 < h; ++g) {
                if (cfg.p == 2) {
                    double vn = 0.0;
                    for (int xx = 0; xx < w; ++xx) {
                        double v = z[zi(g + 1, xx, k)] - z[zi(g, xx, k)] + br[ri(g, xx, k)];
                        vn += v * v;
                    }
                    vn = std::sqrt(vn);
                    double s = vn > 0.0 ? std::max(0.0, 1.0 - thresh / vn) : 0.0;
                    for (int xx = 0; xx < w; ++xx) {
                        double v = z[zi(g + 1, xx, k)] - z[zi(g, xx, k)] + br[ri(g, xx, k)];
                        dr[ri(g, xx, k)] = s * v;
                    }
                } else {
                    for (int xx = 0; xx < w; ++xx) {
                        double v = z[zi(g + 1, xx, k)] - z[zi(g, xx, k)] + br[ri(g, xx, k)];
                        dr[ri(g, xx, k)] = sign_shrink(v, thresh);
                    }
                }
            }
        // dc-step: per column gap
        for (int k = 0; k < c; ++k)
            for (int g = 0; g + 1 < w; ++g) {
                if (cfg.p == 2) {
                    double vn = 0.0;
                    for (int y = 0; y < h; ++y) {
                        double v = z[zi(y, g + 1, k)] - z[zi(y, g, k)] + bc[ci(y, g, k)];
                        vn += v * v;
                    }
                    vn = std::sqrt(vn);
                    double s = vn > 0.0 ? std::max(0.0, 1.0 - thresh / vn) : 0.0;
                    for (int y = 0; y < h; ++y) {
                        double v = z[zi(y, g + 1, k)] - z[zi(y, g, k)] + bc[ci(y, g, k)];
                        dc[ci(y, g, k)] = s * v;
                    }
                } else {
                    for (int y = 0; y < h; ++y) {
                        double v = z[zi(y, g + 1, k)] - z[zi(y, g, k)] + bc[ci(y, g, k)];
                        dc[ci(y, g, k)] = sign_shrink(v, thresh);
                    }
                }
            }
        // dual ascent
        for (std::size_t i = 0; i < hwc; ++i)
            if (mask.keep[i]) be[i] += z[i] - xd[i] - e[i];
        for (int g = 0; g + 1 < h; ++g)
            for (int xx = 0; xx < w; ++xx)
                for (int k = 0; k < c; ++k)
                    br[ri(g, xx, k)] += z[zi(g + 1, xx, k)] - z[zi(g, xx, k)] - dr[ri(g, xx, k)];
        for (int y = 0; y < h; ++y)
            for (int g = 0; g + 1 < w; ++g)
                for (int k = 0; k < c; ++k)
                    bc[ci(y, g, k)] += z[zi(y, g + 1, k)] - z[zi(y, g, k)] - dc[ci(y, g, k)];

        double obj = masked_fidelity(z, xd, mask) +
                     cfg.lambda_tv * tv_norm_raw(z.data(), h, w, c, cfg.p);
        sol.objective_trace.push_back(obj);
        if (obj < best_obj) {
            best_obj = obj;
            best_z = z;
        }
        if (iter + 1 >= min_iters &&
            std::fabs(obj - prev_obj) <= cfg.tolerance * (1.0 + std::fabs(prev_obj))) {
            sol.converged = true;
            ++iter;
            break;
        }
        prev_obj = obj;
    }

    for (double& v : best_z) v = std::clamp(v, 0.0, 1.0);
    sol.z = from_doubles(best_z, h, w, c);
    sol.iterations = iter;
    sol.objective = tvm_objective(x, mask, sol.z, cfg);
    return sol;
}

Image tvm_defense(const Image& x, const TvmConfig& cfg, SeedStream stream) {
    DropoutMask mask = sample_mask(x.height, x.width, x.channels, cfg.keep_prob, stream);
    return tvm_reconstruct(x, mask, cfg).z;
}

} // namespace advlab
