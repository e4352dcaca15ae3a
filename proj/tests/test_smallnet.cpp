#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "advlab/dataset.hpp"
#include "advlab/errors.hpp"
#include "advlab/net.hpp"
#include "advlab/tensor_io.hpp"

#include "test_models.hpp"

using namespace advlab;
namespace fs = std::filesystem;

namespace {

Image random_image(int h, int w, int c, std::uint64_t seed) {
    Rng rng(SeedStream::root(seed));
    Image img(h, w, c);
    for (float& v : img.data) v = float(rng.next_double());
    return img;
}

ModelParams zero_params(ArchId id, int classes) {
    ModelParams p = init_params(make_architecture(id, classes), SeedStream::root(0));
    for (auto& w : p.conv_w) std::fill(w.begin(), w.end(), 0.0f);
    for (auto& b : p.conv_b) std::fill(b.begin(), b.end(), 0.0f);
    std::fill(p.fc_w.begin(), p.fc_w.end(), 0.0f);
    std::fill(p.fc_b.begin(), p.fc_b.end(), 0.0f);
    return p;
}

// Central finite difference of a scalar function of one input coordinate.
template <typename F>
double central_diff(std::vector<double>& xd, std::size_t j, F value, double h = 1e-3) {
    double keep = xd[j];
    xd[j] = keep + h;
    double up = value(xd);
    xd[j] = keep - h;
    double down = value(xd);
    xd[j] = keep;
    return (up - down) / (2.0 * h);
}

double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-8});
}

// The loss is piecewise smooth (relu/max-pool kinks); a central difference
// spanning a kink does not estimate the one-sided gradient at x at all. A
// kink inside the window makes the h and h/2 estimates disagree, so demand
// they agree first; a genuine backprop bug would leave them agreeing with
// each other while disagreeing with the analytic value.
template <typename F>
bool fd_clean(std::vector<double>& xd, std::size_t j, F value, double* fd_out) {
    double f1 = central_diff(xd, j, value, 1e-3);
    double f2 = central_diff(xd, j, value, 5e-4);
    *fd_out = f1;
    return rel_err(f1, f2) < 1e-6;
}

} // namespace

TEST_CASE("zero parameters: uniform softmax and dead input gradient") {
    ModelParams p = zero_params(ArchId::A, 10);
    Image x = random_image(32, 32, 3, 1);
    std::vector<double> z = forward(p, x);
    for (double v : z) CHECK(v == 0.0);
    CHECK(predict(p, x) == 0); // tie rule: lowest index

    auto [loss, grad] = loss_and_input_gradient(p, x, 3);
    CHECK(loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    for (double g : grad) CHECK(g == 0.0);
    for (double g : logit_gradient(p, x, 7)) CHECK(g == 0.0);
}

TEST_CASE("forward determinism") {
    ModelParams p = init_params(make_architecture(ArchId::A, 10), SeedStream::root(4));
    Image x = random_image(32, 32, 3, 2);
    CHECK(forward(p, x) == forward(p, x));
}

TEST_CASE("argmax rules via linear model") {
    using testing::LinearModel;
    LinearModel m(1, 1, 1, {{0.0}, {0.0}, {0.0}}, {0.1, 0.9, 0.3});
    Image x(1, 1, 1, 0.5f);
    CHECK(classifier_predict(m, x) == 1);

    LinearModel tie(1, 1, 1, {{0.0}, {0.0}, {0.0}}, {0.4, 0.4, 0.4});
    CHECK(classifier_predict(tie, x) == 0);

    LinearModel shifted(1, 1, 1, {{0.0}, {0.0}, {0.0}}, {0.1 + 5.0, 0.9 + 5.0, 0.3 + 5.0});
    CHECK(classifier_predict(shifted, x) == classifier_predict(m, x));
}

TEST_CASE("predict invariant under positive logit rescaling") {
    ModelParams p = init_params(make_architecture(ArchId::A, 10), SeedStream::root(9));
    ModelParams scaled = p;
    for (float& v : scaled.fc_w) v *= 3.7f;
    for (float& v : scaled.fc_b) v *= 3.7f;
    for (int i = 0; i < 5; ++i) {
        Image x = random_image(32, 32, 3, 100 + i);
        CHECK(predict(p, x) == predict(scaled, x));
    }
}

TEST_CASE("gradient oracle: loss and logit gradients match finite differences") {
    Rng pick(SeedStream::root(77));
    for (int pair = 0; pair < 4; ++pair) {
        ArchId id = pair % 2 == 0 ? ArchId::A : ArchId::B;
        ModelParams p = init_params(make_architecture(id, 10), SeedStream::root(50 + pair));
        SmallNet net(p);
        Image x = random_image(32, 32, 3, 200 + pair);
        std::vector<double> xd = to_doubles(x);
        int y = int(pick.below(10));
        int k = int(pick.below(10));

        double loss = 0.0;
        std::vector<double> lgrad(xd.size()), kgrad(xd.size());
        net.loss_grad_batch(xd.data(), &y, 1, &loss, lgrad.data());
        net.logit_grad_batch(xd.data(), &k, 1, kgrad.data());

        auto loss_at = [&](std::vector<double>& v) {
            double l = 0.0;
            std::vector<double> tmp(v.size());
            net.loss_grad_batch(v.data(), &y, 1, &l, tmp.data());
            return l;
        };
        auto logit_at = [&](std::vector<double>& v) {
            std::vector<double> z(10);
            net.logits_batch(v.data(), 1, z.data());
            return z[k];
        };
        int checked = 0;
        for (int tries = 0; tries < 400 && checked < 20; ++tries) {
            std::size_t j = pick.below(xd.size());
            double fd_loss = 0.0, fd_logit = 0.0;
            if (!fd_clean(xd, j, loss_at, &fd_loss) || !fd_clean(xd, j, logit_at, &fd_logit))
                continue; // kink inside the difference window
            CHECK(rel_err(fd_loss, lgrad[j]) < 1e-4);
            CHECK(rel_err(fd_logit, kgrad[j]) < 1e-4);
            ++checked;
        }
        CHECK(checked >= 20);
    }
}

TEST_CASE("loss gradient equals probability-weighted logit gradients") {
    ModelParams p = init_params(make_architecture(ArchId::A, 10), SeedStream::root(31));
    SmallNet net(p);
    Image x = random_image(32, 32, 3, 17);
    std::vector<double> xd = to_doubles(x);
    int y = 4;
    double loss = 0.0;
    std::vector<double> lgrad(xd.size());
    net.loss_grad_batch(xd.data(), &y, 1, &loss, lgrad.data());

    std::vector<double> z(10), probs(10);
    net.logits_batch(xd.data(), 1, z.data());
    softmax(z.data(), 10, probs.data());
    std::vector<double> acc(xd.size(), 0.0), kg(xd.size());
    for (int k = 0; k < 10; ++k) {
        net.logit_grad_batch(xd.data(), &k, 1, kg.data());
        double w = probs[k] - (k == y ? 1.0 : 0.0);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += w * kg[j];
    }
    for (std::size_t j = 0; j < acc.size(); ++j)
        CHECK(std::fabs(acc[j] - lgrad[j]) <= 1e-12 + 1e-9 * std::fabs(lgrad[j]));
}

TEST_CASE("training: zero epochs returns the seeded initialization, same seed twice is identical") {
    Dataset data = generate_synthetic(10, 4, 123);
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 99;
    Architecture arch = make_architecture(ArchId::A, 10);
    TrainResult r = train(arch, data, cfg);
    ModelParams ref = init_params(arch, SeedStream::root(99).child(0));
    CHECK(r.params.conv_w == ref.conv_w);
    CHECK(r.params.fc_w == ref.fc_w);

    cfg.epochs = 1;
    TrainResult a = train(arch, data, cfg);
    TrainResult b = train(arch, data, cfg);
    CHECK(a.params.conv_w == b.params.conv_w);
    CHECK(a.params.conv_b == b.params.conv_b);
    CHECK(a.params.fc_w == b.params.fc_w);
    CHECK(a.params.fc_b == b.params.fc_b);
    CHECK(a.epoch_losses == b.epoch_losses);
}

TEST_CASE("training smoke: loss decreases and small dataset is fit") {
    Dataset data = generate_synthetic(3, 30, 7);
    TrainConfig cfg;
    cfg.epochs = 25;
    cfg.batch_size = 16;
    cfg.seed = 5;
    cfg.augment = false;
    Architecture arch = make_architecture(ArchId::A, 3);
    TrainResult r = train(arch, data, cfg);
    CHECK(r.epoch_losses.front() > r.epoch_losses.back());
    int correct = 0;
    for (const LabeledExample& ex : data.examples)
        correct += predict(r.params, ex.image) == ex.label ? 1 : 0;
    CHECK(double(correct) / data.examples.size() >= 0.9);
}

TEST_CASE("checkpoint round trip and version checking") {
    ModelParams p = init_params(make_architecture(ArchId::B, 10), SeedStream::root(12));
    std::string path = (fs::temp_directory_path() / "advlab_ck.bin").string();
    save_checkpoint(p, path);
    ModelParams q = load_checkpoint(path);
    CHECK(p.conv_w == q.conv_w);
    CHECK(p.conv_b == q.conv_b);
    CHECK(p.fc_w == q.fc_w);
    CHECK(p.fc_b == q.fc_b);
    CHECK(q.arch.id == ArchId::B);

    // corrupt the version field (bytes 4..7)
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        char two[4] = {2, 0, 0, 0};
        f.write(two, 4);
    }
    CHECK_THROWS_AS(load_checkpoint(path), VersionError);

    save_checkpoint(p, path);
    fs::resize_file(path, 200);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
}

TEST_CASE("frozen fixture: checkpoint reproduces reference logits") {
    std::string dir = FIXTURE_DIR;
    ModelParams p = load_checkpoint(dir + "/ref_model.ckpt");
    Image x = load_tensor(dir + "/ref_input.atns");
    Image want = load_tensor(dir + "/ref_logits.atns");
    std::vector<double> z = forward(p, x);
    REQUIRE(int(want.data.size()) == int(z.size()));
    for (std::size_t k = 0; k < z.size(); ++k)
        CHECK(std::fabs(z[k] - double(want.data[k])) < 1e-6);
}
