#include "advlab/net.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <numeric>

#include "advlab/errors.hpp"
#include "advlab/pixel_transforms.hpp"
#include "advlab/tensor_io.hpp"

extern "C" void openblas_set_num_threads(int);

namespace advlab {

namespace {

// Keep BLAS single-threaded; parallelism happens at the image/model level and
// must not depend on BLAS scheduling.
struct BlasInit {
    BlasInit() { openblas_set_num_threads(1); }
} const blas_init;

// Seed-stream tags used by training; part of the reproducibility contract.
constexpr std::uint64_t kTagInit = 0, kTagTransform = 1, kTagShuffle = 2, kTagAugment = 3;

constexpr char kCkptMagic[4] = {'A', 'C', 'K', 'P'};
constexpr std::uint32_t kCkptVersion = 1;

} // namespace

std::vector<ConvStage> Architecture::stages() const {
    if (id == ArchId::A) return {{input_c, 16, true}, {16, 32, true}};
    return {{input_c, 24, true}, {24, 48, true}, {48, 48, false}};
}

int Architecture::fc_inputs() const {
    int h = input_h, w = input_w, c = input_c;
    for (const ConvStage& s : stages()) {
        c = s.out_c;
        if (s.pool) {
            h /= 2;
            w /= 2;
        }
    }
    return h * w * c;
}

Architecture make_architecture(ArchId id, int num_classes) {
    if (num_classes < 2) throw InvalidInputError("architecture needs at least 2 classes");
    Architecture a;
    a.id = id;
    a.num_classes = num_classes;
    return a;
}

ArchId parse_arch(const std::string& name) {
    if (name == "a" || name == "A") return ArchId::A;
    if (name == "b" || name == "B") return ArchId::B;
    throw InvalidInputError("unknown architecture: " + name);
}

bool ModelParams::same_shape(const ModelParams& o) const {
    if (arch.id != o.arch.id || arch.num_classes != o.arch.num_classes) return false;
    if (conv_w.size() != o.conv_w.size()) return false;
    for (std::size_t s = 0; s < conv_w.size(); ++s)
        if (conv_w[s].size() != o.conv_w[s].size() || conv_b[s].size() != o.conv_b[s].size())
            return false;
    return fc_w.size() == o.fc_w.size() && fc_b.size() == o.fc_b.size();
}

ModelParams init_params(const Architecture& arch, SeedStream stream) {
    Rng rng(stream);
    ModelParams p;
    p.arch = arch;
    for (const ConvStage& s : arch.stages()) {
        double bound = std::sqrt(6.0 / (s.in_c * 9 + s.out_c * 9));
        std::vector<float> w(std::size_t(s.out_c) * 9 * s.in_c);
        for (float& v : w) v = float(rng.uniform(-bound, bound));
        p.conv_w.push_back(std::move(w));
        p.conv_b.emplace_back(s.out_c, 0.0f);
    }
    int fc_in = arch.fc_inputs();
    double bound = std::sqrt(6.0 / (fc_in + arch.num_classes));
    p.fc_w.resize(std::size_t(arch.num_classes) * fc_in);
    for (float& v : p.fc_w) v = float(rng.uniform(-bound, bound));
    p.fc_b.assign(arch.num_classes, 0.0f);
    return p;
}

SmallNet::SmallNet(ModelParams params) : params_(std::move(params)) { refresh_mirrors(); }

void SmallNet::refresh_mirrors() {
    conv_w_d_.clear();
    conv_b_d_.clear();
    for (std::size_t s = 0; s < params_.conv_w.size(); ++s) {
        conv_w_d_.emplace_back(params_.conv_w[s].begin(), params_.conv_w[s].end());
        conv_b_d_.emplace_back(params_.conv_b[s].begin(), params_.conv_b[s].end());
    }
    fc_w_d_.assign(params_.fc_w.begin(), params_.fc_w.end());
    fc_b_d_.assign(params_.fc_b.begin(), params_.fc_b.end());
}

namespace {

// im2col for 3x3 / pad 1 / stride 1 over channel-innermost layout.
// Rows are (image, y, x); columns are (ky, kx, ci).
void im2col(const double* in, int n, int h, int w, int c, std::vector<double>& col) {
    std::size_t k = std::size_t(9) * c;
    col.assign(std::size_t(n) * h * w * k, 0.0);
    for (int i = 0; i < n; ++i)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double* row = col.data() + ((std::size_t(i) * h + y) * w + x) * k;
                for (int ky = 0; ky < 3; ++ky) {
                    int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        int sx = x + kx - 1;
                        if (sx < 0 || sx >= w) continue;
                        const double* src = in + ((std::size_t(i) * h + sy) * w + sx) * c;
                        std::memcpy(row + (ky * 3 + kx) * c, src, sizeof(double) * c);
                    }
                }
            }
}

void col2im_add(const std::vector<double>& col, int n, int h, int w, int c, double* out) {
    std::size_t k = std::size_t(9) * c;
    for (int i = 0; i < n; ++i)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double* row = col.data() + ((std::size_t(i) * h + y) * w + x) * k;
                for (int ky = 0; ky < 3; ++ky) {
                    int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        int sx = x + kx - 1;
                        if (sx < 0 || sx >= w) continue;
                        double* dst = out + ((std::size_t(i) * h + sy) * w + sx) * c;
                        const double* src = row + (ky * 3 + kx) * c;
                        for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
                    }
                }
            }
}

struct StageCache {
    int h = 0, w = 0;          // spatial size at stage input
    std::vector<double> col;   // n*h*w x 9*in_c
    std::vector<double> act;   // n*h*w x out_c, post-relu
    std::vector<double> pooled;
    std::vector<int> argmax;   // flat index into act per pooled element
};

struct ForwardCache {
    std::vector<StageCache> stages;
    const double* features = nullptr; // n x fc_inputs
    std::vector<double> logits;       // n x num_classes
};

} // namespace

struct NetPass {
    const SmallNet& net;
    const Architecture& arch;
    std::vector<ConvStage> stages;
    int n;
    ForwardCache cache;

    NetPass(const SmallNet& net, const double* xs, int n)
        : net(net), arch(net.params().arch), stages(arch.stages()), n(n) {
        forward(xs);
    }

    void forward(const double* xs) {
        const double* cur = xs;
        int h = arch.input_h, w = arch.input_w, c = arch.input_c;
        cache.stages.resize(stages.size());
        for (std::size_t s = 0; s < stages.size(); ++s) {
            StageCache& sc = cache.stages[s];
            sc.h = h;
            sc.w = w;
            im2col(cur, n, h, w, c, sc.col);
            int p = n * h * w, co = stages[s].out_c, k = 9 * c;
            sc.act.resize(std::size_t(p) * co);
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, p, co, k, 1.0, sc.col.data(),
                        k, net.conv_w_d()[s].data(), k, 0.0, sc.act.data(), co);
            const std::vector<double>& bias = net.conv_b_d()[s];
            for (int row = 0; row < p; ++row) {
                double* a = sc.act.data() + std::size_t(row) * co;
                for (int ch = 0; ch < co; ++ch) {
                    a[ch] += bias[ch];
                    if (a[ch] < 0.0) a[ch] = 0.0; // relu
                }
            }
            if (stages[s].pool) {
                int h2 = h / 2, w2 = w / 2;
                sc.pooled.resize(std::size_t(n) * h2 * w2 * co);
                sc.argmax.resize(sc.pooled.size());
                for (int i = 0; i < n; ++i)
                    for (int y2 = 0; y2 < h2; ++y2)
                        for (int x2 = 0; x2 < w2; ++x2)
                            for (int ch = 0; ch < co; ++ch) {
                                double best = -1.0;
                                int besti = -1;
                                // first maximal element in scan order wins
                                for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx) {
                                        std::size_t idx =
                                            ((std::size_t(i) * h + (2 * y2 + dy)) * w +
                                             (2 * x2 + dx)) * co + ch;
                                        if (besti < 0 || sc.act[idx] > best) {
                                            best = sc.act[idx];
                                            besti = int(idx);
                                        }
                                    }
                                std::size_t oidx =
                                    ((std::size_t(i) * h2 + y2) * w2 + x2) * co + ch;
                                sc.pooled[oidx] = best;
                                sc.argmax[oidx] = besti;
                            }
                cur = sc.pooled.data();
                h = h2;
                w = w2;
            } else {
                cur = sc.act.data();
            }
            c = co;
        }
        cache.features = cur;
        int fc_in = arch.fc_inputs(), nc = arch.num_classes;
        cache.logits.resize(std::size_t(n) * nc);
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, n, nc, fc_in, 1.0, cur, fc_in,
                    net.fc_w_d().data(), fc_in, 0.0, cache.logits.data(), nc);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < nc; ++k) cache.logits[std::size_t(i) * nc + k] += net.fc_b_d()[k];
    }

    // Backprop dlogits (n x num_classes) to the input; optionally accumulate
    // parameter gradients.
    void backward(const std::vector<double>& dlogits, double* dx_out,
                  SmallNet::ParamGrads* pgrads) {
        int fc_in = arch.fc_inputs(), nc = arch.num_classes;
        std::vector<double> dcur(std::size_t(n) * fc_in);
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, n, fc_in, nc, 1.0,
                    dlogits.data(), nc, net.fc_w_d().data(), fc_in, 0.0, dcur.data(), fc_in);
        if (pgrads) {
            cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, nc, fc_in, n, 1.0,
                        dlogits.data(), nc, cache.features, fc_in, 1.0, pgrads->fc_w.data(),
                        fc_in);
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < nc; ++k)
                    pgrads->fc_b[k] += dlogits[std::size_t(i) * nc + k];
        }
        for (int s = int(stages.size()) - 1; s >= 0; --s) {
            StageCache& sc = cache.stages[s];
            int h = sc.h, w = sc.w, co = stages[s].out_c, ci = stages[s].in_c;
            int p = n * h * w, k = 9 * ci;
            std::vector<double> dact(std::size_t(p) * co, 0.0);
            if (stages[s].pool) {
                for (std::size_t j = 0; j < sc.argmax.size(); ++j)
                    dact[sc.argmax[j]] += dcur[j];
            } else {
                dact = std::move(dcur);
            }
            // relu mask: post-activation zero means no gradient
            for (std::size_t j = 0; j < dact.size(); ++j)
                if (sc.act[j] == 0.0) dact[j] = 0.0;
            if (pgrads) {
                cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, co, k, p, 1.0, dact.data(),
                            co, sc.col.data(), k, 1.0, pgrads->conv_w[s].data(), k);
                for (int row = 0; row < p; ++row)
                    for (int ch = 0; ch < co; ++ch)
                        pgrads->conv_b[s][ch] += dact[std::size_t(row) * co + ch];
            }
            bool need_dx = s > 0 || dx_out != nullptr;
            if (!need_dx) break;
            std::vector<double> dcol(std::size_t(p) * k);
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, p, k, co, 1.0, dact.data(),
                        co, net.conv_w_d()[s].data(), k, 0.0, dcol.data(), k);
            if (s > 0) {
                dcur.assign(std::size_t(p) * ci, 0.0);
                col2im_add(dcol, n, h, w, ci, dcur.data());
            } else {
                std::fill(dx_out, dx_out + std::size_t(n) * h * w * ci, 0.0);
                col2im_add(dcol, n, h, w, ci, dx_out);
            }
        }
    }
};

void SmallNet::logits_batch(const double* xs, int n, double* logits_out) const {
    NetPass pass(*this, xs, n);
    std::copy(pass.cache.logits.begin(), pass.cache.logits.end(), logits_out);
}

void SmallNet::loss_grad_batch(const double* xs, const int* labels, int n, double* losses_out,
                               double* grads_out) const {
    int nc = params_.arch.num_classes;
    for (int i = 0; i < n; ++i)
        if (labels[i] < 0 || labels[i] >= nc)
            throw InvalidInputError("loss_grad_batch: label out of range");
    NetPass pass(*this, xs, n);
    std::vector<double> dlogits(std::size_t(n) * nc);
    std::vector<double> probs(nc);
    for (int i = 0; i < n; ++i) {
        const double* z = pass.cache.logits.data() + std::size_t(i) * nc;
        softmax(z, nc, probs.data());
        double m = *std::max_element(z, z + nc);
        double lse = 0.0;
        for (int k = 0; k < nc; ++k) lse += std::exp(z[k] - m);
        losses_out[i] = std::log(lse) + m - z[labels[i]];
        for (int k = 0; k < nc; ++k)
            dlogits[std::size_t(i) * nc + k] = probs[k] - (k == labels[i] ? 1.0 : 0.0);
    }
    pass.backward(dlogits, grads_out, nullptr);
}

void SmallNet::logit_grad_batch(const double* xs, const int* ks, int n,
                                double* grads_out) const {
    int nc = params_.arch.num_classes;
    for (int i = 0; i < n; ++i)
        if (ks[i] < 0 || ks[i] >= nc) throw InvalidInputError("logit_grad_batch: class out of range");
    NetPass pass(*this, xs, n);
    std::vector<double> dlogits(std::size_t(n) * nc, 0.0);
    for (int i = 0; i < n; ++i) dlogits[std::size_t(i) * nc + ks[i]] = 1.0;
    pass.backward(dlogits, grads_out, nullptr);
}

double SmallNet::param_grad_batch(const double* xs, const int* labels, int n,
                                  ParamGrads& grads) const {
    const Architecture& arch = params_.arch;
    int nc = arch.num_classes;
    grads.conv_w.clear();
    grads.conv_b.clear();
    for (std::size_t s = 0; s < params_.conv_w.size(); ++s) {
        grads.conv_w.emplace_back(params_.conv_w[s].size(), 0.0);
        grads.conv_b.emplace_back(params_.conv_b[s].size(), 0.0);
    }
    grads.fc_w.assign(params_.fc_w.size(), 0.0);
    grads.fc_b.assign(params_.fc_b.size(), 0.0);

    NetPass pass(*this, xs, n);
    std::vector<double> dlogits(std::size_t(n) * nc);
    std::vector<double> probs(nc);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* z = pass.cache.logits.data() + std::size_t(i) * nc;
        double m = *std::max_element(z, z + nc);
        double lse = 0.0;
        for (int k = 0; k < nc; ++k) lse += std::exp(z[k] - m);
        total += std::log(lse) + m - z[labels[i]];
        softmax(z, nc, probs.data());
        for (int k = 0; k < nc; ++k)
            dlogits[std::size_t(i) * nc + k] =
                (probs[k] - (k == labels[i] ? 1.0 : 0.0)) / double(n);
    }
    pass.backward(dlogits, nullptr, &grads);
    return total / double(n);
}

std::vector<double> forward(const ModelParams& params, const Image& x) {
    SmallNet net(params);
    return classifier_logits(net, x);
}

int predict(const ModelParams& params, const Image& x) {
    SmallNet net(params);
    return classifier_predict(net, x);
}

std::pair<double, std::vector<double>> loss_and_input_gradient(const ModelParams& params,
                                                               const Image& x, int y) {
    SmallNet net(params);
    if (x.height != net.input_height() || x.width != net.input_width() ||
        x.channels != net.input_channels())
        throw InvalidInputError("loss_and_input_gradient: shape mismatch");
    std::vector<double> xd = to_doubles(x);
    double loss = 0.0;
    std::vector<double> grad(xd.size());
    net.loss_grad_batch(xd.data(), &y, 1, &loss, grad.data());
    return {loss, std::move(grad)};
}

std::vector<double> logit_gradient(const ModelParams& params, const Image& x, int k) {
    SmallNet net(params);
    if (x.height != net.input_height() || x.width != net.input_width() ||
        x.channels != net.input_channels())
        throw InvalidInputError("logit_gradient: shape mismatch");
    std::vector<double> xd = to_doubles(x);
    std::vector<double> grad(xd.size());
    net.logit_grad_batch(xd.data(), &k, 1, grad.data());
    return grad;
}

namespace {

Image augment_example(const Image& img, SeedStream stream) {
    Rng rng(stream);
    int side = int(std::lround(0.9 * std::min(img.height, img.width)));
    int oy = rng.uniform_int(0, img.height - side);
    int ox = rng.uniform_int(0, img.width - side);
    bool flip = rng.bernoulli(0.5);
    Image out = bilinear_resize(crop_image(img, oy, ox, side, side), img.height, img.width);
    if (flip) {
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width / 2; ++x)
                for (int c = 0; c < out.channels; ++c)
                    std::swap(out.at(y, x, c), out.at(y, out.width - 1 - x, c));
    }
    return out;
}

} // namespace

TrainResult train(const Architecture& arch, const Dataset& data, const TrainConfig& cfg,
                  const ExampleTransform* transform) {
    if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.learning_rate <= 0.0)
        throw InvalidInputError("train: bad config");
    if (data.examples.empty()) throw InvalidInputError("train: empty dataset");
    if (data.num_classes != arch.num_classes)
        throw InvalidInputError("train: dataset classes do not match architecture");
    for (const LabeledExample& ex : data.examples)
        if (ex.label < 0 || ex.label >= arch.num_classes)
            throw InvalidInputError("train: label out of range");

    SeedStream root = SeedStream::root(cfg.seed);
    std::vector<Image> images(data.examples.size());
    std::vector<int> labels(data.examples.size());
    for (std::size_t i = 0; i < data.examples.size(); ++i) {
        images[i] = transform ? (*transform)(data.examples[i].image,
                                             root.child(kTagTransform).child(i))
                              : data.examples[i].image;
        labels[i] = data.examples[i].label;
    }

    ModelParams params = init_params(arch, root.child(kTagInit));
    // momentum buffers, double precision
    std::vector<std::vector<double>> vel_cw, vel_cb;
    for (std::size_t s = 0; s < params.conv_w.size(); ++s) {
        vel_cw.emplace_back(params.conv_w[s].size(), 0.0);
        vel_cb.emplace_back(params.conv_b[s].size(), 0.0);
    }
    std::vector<double> vel_fw(params.fc_w.size(), 0.0), vel_fb(params.fc_b.size(), 0.0);

    auto sgd_step = [&](std::vector<float>& w, std::vector<double>& v,
                        const std::vector<double>& g) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = cfg.momentum * v[i] - cfg.learning_rate * g[i];
            w[i] = float(double(w[i]) + v[i]);
        }
    };

    TrainResult result;
    int dim = arch.input_h * arch.input_w * arch.input_c;
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::vector<double> xs;
    std::vector<int> ys;
    SmallNet::ParamGrads grads;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(root.child(kTagShuffle).child(std::uint64_t(epoch)));
        std::iota(order.begin(), order.end(), std::size_t(0));
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
            std::size_t stop = std::min(order.size(), start + std::size_t(cfg.batch_size));
            int bn = int(stop - start);
            xs.resize(std::size_t(bn) * dim);
            ys.resize(bn);
            for (int b = 0; b < bn; ++b) {
                std::size_t idx = order[start + b];
                Image ex = cfg.augment
                               ? augment_example(images[idx], root.child(kTagAugment)
                                                                  .child(std::uint64_t(epoch))
                                                                  .child(idx))
                               : images[idx];
                for (int j = 0; j < dim; ++j) xs[std::size_t(b) * dim + j] = double(ex.data[j]);
                ys[b] = labels[idx];
            }
            SmallNet net(params);
            double loss = net.param_grad_batch(xs.data(), ys.data(), bn, grads);
            epoch_loss += loss * bn;
            seen += std::size_t(bn);
            for (std::size_t s = 0; s < params.conv_w.size(); ++s) {
                sgd_step(params.conv_w[s], vel_cw[s], grads.conv_w[s]);
                sgd_step(params.conv_b[s], vel_cb[s], grads.conv_b[s]);
            }
            sgd_step(params.fc_w, vel_fw, grads.fc_w);
            sgd_step(params.fc_b, vel_fb, grads.fc_b);
        }
        double mean_loss = epoch_loss / double(seen);
        result.epoch_losses.push_back(mean_loss);
        std::fprintf(stderr, "epoch %d/%d loss %.6f\n", epoch + 1, cfg.epochs, mean_loss);
    }
    result.params = std::move(params);
    return result;
}

namespace {

void write_section(std::FILE* f, const std::string& name, const float* data, int h, int w,
                   int c) {
    std::uint32_t len = std::uint32_t(name.size());
    unsigned char lb[4] = {static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8),
                           static_cast<unsigned char>(len >> 16),
                           static_cast<unsigned char>(len >> 24)};
    if (std::fwrite(lb, 1, 4, f) != 4 || std::fwrite(name.data(), 1, len, f) != len)
        throw FormatError("checkpoint write failed");
    Image t(h, w, c);
    std::copy(data, data + t.data.size(), t.data.begin());
    write_tensor(f, t);
}

std::pair<std::string, Image> read_section(std::FILE* f) {
    unsigned char lb[4];
    if (std::fread(lb, 1, 4, f) != 4) throw FormatError("checkpoint truncated");
    std::uint32_t len = std::uint32_t(lb[0]) | std::uint32_t(lb[1]) << 8 |
                        std::uint32_t(lb[2]) << 16 | std::uint32_t(lb[3]) << 24;
    if (len > 256) throw FormatError("checkpoint section name too long");
    std::string name(len, '\0');
    if (std::fread(name.data(), 1, len, f) != len) throw FormatError("checkpoint truncated");
    return {name, read_tensor(f)};
}

void put_u32f(std::FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    if (std::fwrite(b, 1, 4, f) != 4) throw FormatError("checkpoint write failed");
}

std::uint32_t get_u32f(std::FILE* f) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw FormatError("checkpoint truncated");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

} // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw FormatError("cannot open checkpoint for writing: " + path);
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> guard(f, std::fclose);
    if (std::fwrite(kCkptMagic, 1, 4, f) != 4) throw FormatError("checkpoint write failed");
    put_u32f(f, kCkptVersion);
    put_u32f(f, params.arch.id == ArchId::A ? 0u : 1u);
    put_u32f(f, std::uint32_t(params.arch.num_classes));
    std::vector<ConvStage> stages = params.arch.stages();
    put_u32f(f, std::uint32_t(2 * stages.size() + 2));
    for (std::size_t s = 0; s < stages.size(); ++s) {
        std::string tag = "conv" + std::to_string(s + 1);
        write_section(f, tag + ".w", params.conv_w[s].data(), stages[s].out_c, 9,
                      stages[s].in_c);
        write_section(f, tag + ".b", params.conv_b[s].data(), 1, 1, stages[s].out_c);
    }
    write_section(f, "fc.w", params.fc_w.data(), params.arch.num_classes,
                  params.arch.fc_inputs(), 1);
    write_section(f, "fc.b", params.fc_b.data(), 1, 1, params.arch.num_classes);
}

ModelParams load_checkpoint(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw FormatError("cannot open checkpoint: " + path);
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> guard(f, std::fclose);
    char magic[4];
    if (std::fread(magic, 1, 4, f) != 4) throw FormatError("checkpoint truncated");
    if (std::memcmp(magic, kCkptMagic, 4) != 0) throw FormatError("bad checkpoint magic");
    std::uint32_t version = get_u32f(f);
    if (version != kCkptVersion)
        throw VersionError("checkpoint version " + std::to_string(version) + ", expected " +
                           std::to_string(kCkptVersion));
    std::uint32_t arch_id = get_u32f(f);
    std::uint32_t nc = get_u32f(f);
    if (arch_id > 1) throw FormatError("unknown architecture id in checkpoint");
    Architecture arch = make_architecture(arch_id == 0 ? ArchId::A : ArchId::B, int(nc));
    std::uint32_t sections = get_u32f(f);
    std::vector<ConvStage> stages = arch.stages();
    if (sections != 2 * stages.size() + 2) throw FormatError("unexpected checkpoint layout");

    ModelParams p;
    p.arch = arch;
    auto expect = [&](const std::string& want, int h, int w, int c) {
        auto [name, t] = read_section(f);
        if (name != want) throw FormatError("unexpected checkpoint section: " + name);
        if (t.height != h || t.width != w || t.channels != c)
            throw FormatError("checkpoint tensor shape mismatch in " + name);
        return t.data;
    };
    for (std::size_t s = 0; s < stages.size(); ++s) {
        std::string tag = "conv" + std::to_string(s + 1);
        p.conv_w.push_back(expect(tag + ".w", stages[s].out_c, 9, stages[s].in_c));
        p.conv_b.push_back(expect(tag + ".b", 1, 1, stages[s].out_c));
    }
    p.fc_w = expect("fc.w", arch.num_classes, arch.fc_inputs(), 1);
    p.fc_b = expect("fc.b", 1, 1, arch.num_classes);
    return p;
}

} // namespace advlab
