#include "advlab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "advlab/errors.hpp"
#include "advlab/format.hpp"
#include "advlab/image.hpp"
#include "advlab/parallel.hpp"
#include "advlab/tensor_io.hpp"

namespace fs = std::filesystem;

namespace advlab {

namespace {

constexpr int kChunk = 64; // fixed batching unit; results independent of threads

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void clip01_inplace(std::vector<double>& v) {
    for (double& x : v) x = std::clamp(x, 0.0, 1.0);
}

void check_input(const Classifier& model, const Image& x) {
    if (x.height != model.input_height() || x.width != model.input_width() ||
        x.channels != model.input_channels())
        throw InvalidInputError("attack: input shape mismatch");
}

// All batch kernels read n source images from x0 (n*dim) and write the
// adversarial batch to out (n*dim).

void fgsm_chunk(const Classifier& model, const double* x0, const int* ys, int n, double eps,
                int steps, double* out) {
    int dim = model.input_dim();
    std::vector<double> cur(x0, x0 + std::size_t(n) * dim);
    std::vector<double> losses(n), grads(std::size_t(n) * dim);
    for (int step = 0; step < steps; ++step) {
        model.loss_grad_batch(cur.data(), ys, n, losses.data(), grads.data());
        for (std::size_t j = 0; j < cur.size(); ++j)
            cur[j] = std::clamp(cur[j] + eps * sign0(grads[j]), 0.0, 1.0);
    }
    std::copy(cur.begin(), cur.end(), out);
}

void deepfool_chunk(const Classifier& model, const double* x0, int n, double eps, int m,
                    double overshoot, double* out) {
    int dim = model.input_dim(), nc = model.num_classes();
    std::vector<double> cur(x0, x0 + std::size_t(n) * dim);
    std::vector<int> orig_pred(n, -1);
    std::vector<std::uint8_t> active(n, 1);
    std::vector<double> logits(std::size_t(n) * nc);
    std::vector<double> grads(std::size_t(nc) * n * dim);
    std::vector<int> ks(n);

    for (int iter = 0; iter <= m; ++iter) {
        // gather active set
        std::vector<int> idx;
        for (int i = 0; i < n; ++i)
            if (active[i]) idx.push_back(i);
        if (idx.empty()) break;
        int na = int(idx.size());
        std::vector<double> xa(std::size_t(na) * dim);
        for (int a = 0; a < na; ++a)
            std::copy(cur.begin() + std::size_t(idx[a]) * dim,
                      cur.begin() + std::size_t(idx[a] + 1) * dim,
                      xa.begin() + std::size_t(a) * dim);
        model.logits_batch(xa.data(), na, logits.data());
        for (int a = 0; a < na; ++a) {
            int p = argmax_lowest(logits.data() + std::size_t(a) * nc, nc);
            if (orig_pred[idx[a]] < 0) orig_pred[idx[a]] = p;
            else if (p != orig_pred[idx[a]]) active[idx[a]] = 0; // early stop: flipped
        }
        if (iter == m) break;
        // keep only still-active members of this gather
        std::vector<int> keep;
        for (int a = 0; a < na; ++a)
            if (active[idx[a]]) keep.push_back(a);
        if (keep.empty()) break;

        for (int c = 0; c < nc; ++c) {
            std::fill(ks.begin(), ks.begin() + na, c);
            model.logit_grad_batch(xa.data(), ks.data(), na,
                                   grads.data() + std::size_t(c) * na * dim);
        }
        for (int a : keep) {
            int i = idx[a];
            int k0 = orig_pred[i];
            const double* z = logits.data() + std::size_t(a) * nc;
            const double* gk0 = grads.data() + (std::size_t(k0) * na + a) * dim;
            double best_ratio = 0.0, best_f = 0.0, best_wn2 = 0.0;
            int best_k = -1;
            for (int k = 0; k < nc; ++k) {
                if (k == k0) continue;
                const double* gk = grads.data() + (std::size_t(k) * na + a) * dim;
                double wn2 = 0.0;
                for (int j = 0; j < dim; ++j) {
                    double w = gk[j] - gk0[j];
                    wn2 += w * w;
                }
                if (wn2 == 0.0) continue;
                double f = z[k] - z[k0];
                double ratio = std::fabs(f) / std::sqrt(wn2);
                if (best_k < 0 || ratio < best_ratio) {
                    best_ratio = ratio;
                    best_k = k;
                    best_f = f;
                    best_wn2 = wn2;
                }
            }
            if (best_k < 0)
                throw DegenerateGradientError(
                    "deepfool: all class-boundary gradients vanish");
            const double* gl = grads.data() + (std::size_t(best_k) * na + a) * dim;
            double coef = eps * std::fabs(best_f) / best_wn2 * (1.0 + overshoot);
            double* xi = cur.data() + std::size_t(i) * dim;
            for (int j = 0; j < dim; ++j)
                xi[j] = std::clamp(xi[j] + coef * (gl[j] - gk0[j]), 0.0, 1.0);
        }
    }
    std::copy(cur.begin(), cur.end(), out);
}

// Runs the CW-L2 inner optimization; writes the unscaled optimizer result
// (already inside [0,1]) to out.
void cw_optimize_chunk(const Classifier& model, const double* x0, int n,
                       const AttackConfig& cfg, double* out) {
    int dim = model.input_dim(), nc = model.num_classes();
    std::vector<double> cur(x0, x0 + std::size_t(n) * dim);
    std::vector<double> logits(std::size_t(n) * nc);
    std::vector<double> adam_m(cur.size(), 0.0), adam_v(cur.size(), 0.0);
    std::vector<double> gk0(cur.size()), gks(cur.size());
    std::vector<int> k0(n), kstar(n);
    std::vector<std::uint8_t> hinge(n);

    model.logits_batch(cur.data(), n, logits.data());
    for (int i = 0; i < n; ++i) k0[i] = argmax_lowest(logits.data() + std::size_t(i) * nc, nc);

    const double b1 = 0.9, b2 = 0.999, eps_adam = 1e-8;
    for (int iter = 0; iter < cfg.opt_iterations; ++iter) {
        model.logits_batch(cur.data(), n, logits.data());
        for (int i = 0; i < n; ++i) {
            const double* z = logits.data() + std::size_t(i) * nc;
            double zmax = -1e300;
            int karg = -1;
            for (int k = 0; k < nc; ++k) {
                if (k == k0[i]) continue;
                if (z[k] > zmax) {
                    zmax = z[k];
                    karg = k;
                }
            }
            kstar[i] = karg;
            double margin = z[k0[i]] - zmax;
            double l2sq = 0.0;
            const double* xi = cur.data() + std::size_t(i) * dim;
            const double* x0i = x0 + std::size_t(i) * dim;
            for (int j = 0; j < dim; ++j) {
                double d = xi[j] - x0i[j];
                l2sq += d * d;
            }
            double obj = l2sq + cfg.lambda_f * std::max(-cfg.kappa, margin);
            if (!std::isfinite(obj))
                throw NumericalError("cw_l2: non-finite objective at iteration " +
                                     std::to_string(iter));
            hinge[i] = margin > -cfg.kappa ? 1 : 0;
        }
        if (cfg.lambda_f != 0.0) {
            model.logit_grad_batch(cur.data(), k0.data(), n, gk0.data());
            model.logit_grad_batch(cur.data(), kstar.data(), n, gks.data());
        }
        double c1 = 1.0 - std::pow(b1, iter + 1), c2 = 1.0 - std::pow(b2, iter + 1);
        for (int i = 0; i < n; ++i) {
            double* xi = cur.data() + std::size_t(i) * dim;
            const double* x0i = x0 + std::size_t(i) * dim;
            for (int j = 0; j < dim; ++j) {
                std::size_t jj = std::size_t(i) * dim + j;
                double g = 2.0 * (xi[j] - x0i[j]);
                if (cfg.lambda_f != 0.0 && hinge[i]) g += cfg.lambda_f * (gk0[jj] - gks[jj]);
                adam_m[jj] = b1 * adam_m[jj] + (1.0 - b1) * g;
                adam_v[jj] = b2 * adam_v[jj] + (1.0 - b2) * g * g;
                double step = cfg.opt_lr * (adam_m[jj] / c1) / (std::sqrt(adam_v[jj] / c2) + eps_adam);
                xi[j] = std::clamp(xi[j] - step, 0.0, 1.0);
            }
        }
    }
    std::copy(cur.begin(), cur.end(), out);
}

void cw_chunk(const Classifier& model, const double* x0, int n, const AttackConfig& cfg,
              double* out) {
    cw_optimize_chunk(model, x0, n, cfg, out);
    // post-scale the perturbation, then clip
    int dim = model.input_dim();
    for (std::size_t j = 0; j < std::size_t(n) * dim; ++j)
        out[j] = std::clamp(x0[j] + cfg.epsilon * (out[j] - x0[j]), 0.0, 1.0);
}

std::vector<double> flatten_batch(const std::vector<Image>& xs) {
    std::vector<double> out;
    if (xs.empty()) return out;
    std::size_t dim = xs[0].size();
    out.resize(xs.size() * dim);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!xs[i].same_shape(xs[0])) throw InvalidInputError("attack batch: mixed shapes");
        for (std::size_t j = 0; j < dim; ++j) out[i * dim + j] = double(xs[i].data[j]);
    }
    return out;
}

void attack_batch_raw(const Classifier& model, const std::vector<double>& x0,
                      const std::vector<int>& ys, std::size_t count, const AttackConfig& cfg,
                      std::vector<double>& out) {
    int dim = model.input_dim();
    out.resize(x0.size());
    std::size_t nchunks = (count + kChunk - 1) / kChunk;
    parallel_for(nchunks, [&](std::size_t ci) {
        std::size_t lo = ci * kChunk, hi = std::min(count, lo + kChunk);
        int n = int(hi - lo);
        const double* xp = x0.data() + lo * dim;
        double* op = out.data() + lo * dim;
        switch (cfg.method) {
            case AttackMethod::FGSM:
                fgsm_chunk(model, xp, ys.data() + lo, n, cfg.epsilon, 1, op);
                break;
            case AttackMethod::IFGSM:
                if (cfg.iterations < 1) throw InvalidInputError("ifgsm: M must be >= 1");
                fgsm_chunk(model, xp, ys.data() + lo, n, cfg.epsilon, cfg.iterations, op);
                break;
            case AttackMethod::DEEPFOOL:
                if (cfg.iterations < 1) throw InvalidInputError("deepfool: M must be >= 1");
                deepfool_chunk(model, xp, n, cfg.epsilon, cfg.iterations, cfg.overshoot, op);
                break;
            case AttackMethod::CWL2:
                cw_chunk(model, xp, n, cfg, op);
                break;
        }
    }, 1);
}

} // namespace

AttackMethod parse_attack_method(const std::string& name) {
    if (name == "fgsm") return AttackMethod::FGSM;
    if (name == "ifgsm") return AttackMethod::IFGSM;
    if (name == "deepfool") return AttackMethod::DEEPFOOL;
    if (name == "cw" || name == "cwl2") return AttackMethod::CWL2;
    throw InvalidInputError("unknown attack method: " + name);
}

std::string attack_method_name(AttackMethod m) {
    switch (m) {
        case AttackMethod::FGSM: return "fgsm";
        case AttackMethod::IFGSM: return "ifgsm";
        case AttackMethod::DEEPFOOL: return "deepfool";
        case AttackMethod::CWL2: return "cw";
    }
    return "?";
}

Image fgsm(const Classifier& model, const Image& x, int y, double eps) {
    if (eps < 0.0) throw InvalidInputError("fgsm: eps must be >= 0");
    check_input(model, x);
    std::vector<double> x0 = to_doubles(x), out(x0.size());
    fgsm_chunk(model, x0.data(), &y, 1, eps, 1, out.data());
    return from_doubles(out, x.height, x.width, x.channels);
}

Image ifgsm(const Classifier& model, const Image& x, int y, double eps, int m) {
    if (eps < 0.0) throw InvalidInputError("ifgsm: eps must be >= 0");
    if (m < 1) throw InvalidInputError("ifgsm: M must be >= 1");
    check_input(model, x);
    std::vector<double> x0 = to_doubles(x), out(x0.size());
    fgsm_chunk(model, x0.data(), &y, 1, eps, m, out.data());
    return from_doubles(out, x.height, x.width, x.channels);
}

Image deepfool(const Classifier& model, const Image& x, double eps, int m, double overshoot) {
    if (m < 1) throw InvalidInputError("deepfool: M must be >= 1");
    check_input(model, x);
    std::vector<double> x0 = to_doubles(x), out(x0.size());
    deepfool_chunk(model, x0.data(), 1, eps, m, overshoot, out.data());
    return from_doubles(out, x.height, x.width, x.channels);
}

Image cw_l2(const Classifier& model, const Image& x, const AttackConfig& cfg) {
    check_input(model, x);
    std::vector<double> x0 = to_doubles(x), out(x0.size());
    cw_chunk(model, x0.data(), 1, cfg, out.data());
    return from_doubles(out, x.height, x.width, x.channels);
}

AttackResult run_attack(const Classifier& model, const std::vector<Image>& xs,
                        const std::vector<int>& ys, const AttackConfig& cfg) {
    if (xs.empty()) throw InvalidInputError("run_attack: empty batch");
    if (ys.size() != xs.size()) throw InvalidInputError("run_attack: label count mismatch");
    for (const Image& x : xs) check_input(model, x);

    std::vector<double> x0 = flatten_batch(xs);
    std::vector<double> adv;
    attack_batch_raw(model, x0, ys, xs.size(), cfg, adv);

    int dim = model.input_dim();
    if (cfg.budget_rho > 0.0) {
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double* a = adv.data() + i * dim;
            const double* o = x0.data() + i * dim;
            double n2 = 0.0;
            for (int j = 0; j < dim; ++j) n2 += (a[j] - o[j]) * (a[j] - o[j]);
            double n = std::sqrt(n2);
            if (n > cfg.budget_rho) {
                double s = cfg.budget_rho / n;
                for (int j = 0; j < dim; ++j) a[j] = std::clamp(o[j] + s * (a[j] - o[j]), 0.0, 1.0);
            }
        }
    }

    AttackResult res;
    res.adversarial.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::vector<double> v(adv.begin() + i * dim, adv.begin() + (i + 1) * dim);
        res.adversarial.push_back(from_doubles(v, xs[0].height, xs[0].width, xs[0].channels));
    }
    std::vector<int> pred0 = predict_batch(model, xs);
    std::vector<int> pred1 = predict_batch(model, res.adversarial);
    res.success.resize(xs.size());
    res.l2.resize(xs.size());
    res.linf.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        res.success[i] = pred0[i] != pred1[i] ? 1 : 0;
        res.l2[i] = l2_distance(xs[i], res.adversarial[i]);
        res.linf[i] = linf_distance(xs[i], res.adversarial[i]);
    }
    res.dissimilarity = normalized_l2_dissimilarity(xs, res.adversarial);
    return res;
}

AttackConfig calibrate_to_dissimilarity(const AttackConfig& cfg, const Classifier& model,
                                        const std::vector<Image>& batch,
                                        const std::vector<int>& labels, double target,
                                        double* achieved_out) {
    if (target <= 0.0) throw InvalidInputError("calibrate: target must be > 0");
    if (batch.empty()) throw InvalidInputError("calibrate: empty batch");
    const bool scale_knob =
        cfg.method == AttackMethod::DEEPFOOL || cfg.method == AttackMethod::CWL2;
    double lo = scale_knob ? 1.0 : 1e-4;
    double hi = scale_knob ? 32.0 : 0.5;

    // CW's knob only post-scales the perturbation, so the expensive inner
    // optimization runs once.
    std::vector<double> x0, base;
    std::size_t count = batch.size();
    int dim = model.input_dim();
    if (cfg.method == AttackMethod::CWL2) {
        x0 = flatten_batch(batch);
        AttackConfig inner = cfg;
        inner.epsilon = 1.0;
        base.resize(x0.size());
        std::size_t nchunks = (count + kChunk - 1) / kChunk;
        parallel_for(nchunks, [&](std::size_t ci) {
            std::size_t clo = ci * kChunk, chi = std::min(count, clo + kChunk);
            cw_optimize_chunk(model, x0.data() + clo * dim, int(chi - clo), inner,
                              base.data() + clo * dim);
        }, 1);
    }

    auto achieved = [&](double knob) {
        if (cfg.method == AttackMethod::CWL2) {
            double acc = 0.0;
            for (std::size_t i = 0; i < count; ++i) {
                const double* o = x0.data() + i * dim;
                const double* b = base.data() + i * dim;
                double num = 0.0, den = 0.0;
                for (int j = 0; j < dim; ++j) {
                    double a = std::clamp(o[j] + knob * (b[j] - o[j]), 0.0, 1.0);
                    num += (a - o[j]) * (a - o[j]);
                    den += o[j] * o[j];
                }
                if (den == 0.0) throw InvalidInputError("calibrate: zero-norm original");
                acc += std::sqrt(num) / std::sqrt(den);
            }
            return acc / double(count);
        }
        AttackConfig probe = cfg;
        probe.epsilon = knob;
        return run_attack(model, batch, labels, probe).dissimilarity;
    };

    auto within = [&](double d) { return std::fabs(d - target) <= 0.02 * target; };
    auto finish = [&](double knob, double d) {
        AttackConfig out = cfg;
        out.epsilon = knob;
        if (achieved_out) *achieved_out = d;
        return out;
    };

    double init = std::clamp(cfg.epsilon, lo, hi);
    double d_init = achieved(init);
    if (within(d_init)) return finish(init, d_init);

    double d_lo = achieved(lo), d_hi = achieved(hi);
    if (within(d_lo)) return finish(lo, d_lo);
    if (within(d_hi)) return finish(hi, d_hi);
    if (target < d_lo || target > d_hi)
        throw CalibrationError("calibrate: target " + fmt_double(target) +
                                   " unreachable in knob bracket [" + fmt_double(lo) + ", " +
                                   fmt_double(hi) + "] achieving [" + fmt_double(d_lo) + ", " +
                                   fmt_double(d_hi) + "]",
                               lo, hi, d_lo, d_hi);

    double klo = lo, khi = hi, kmid = init, d_mid = d_init;
    // seed the bracket with the initial probe
    if (d_init < target) klo = init;
    else khi = init;
    for (int iter = 0; iter < 20; ++iter) {
        kmid = 0.5 * (klo + khi);
        d_mid = achieved(kmid);
        if (within(d_mid)) return finish(kmid, d_mid);
        if (d_mid < target) klo = kmid;
        else khi = kmid;
    }
    return finish(kmid, d_mid);
}

void save_attack_result(const AttackResult& result, const std::vector<int>& labels,
                        const std::string& dir) {
    if (labels.size() != result.adversarial.size())
        throw InvalidInputError("save_attack_result: label count mismatch");
    fs::create_directories(dir);
    std::ofstream csv(fs::path(dir) / "manifest.csv");
    if (!csv) throw FormatError("cannot write manifest.csv under " + dir);
    csv << "index,label,success,l2,linf\n";
    for (std::size_t i = 0; i < result.adversarial.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "adv_%05zu.atns", i);
        save_tensor(result.adversarial[i], (fs::path(dir) / name).string());
        csv << i << "," << labels[i] << "," << int(result.success[i]) << ","
            << fmt_double(result.l2[i]) << "," << fmt_double(result.linf[i]) << "\n";
    }
}

} // namespace advlab
