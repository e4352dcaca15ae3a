#include "doctest.h"

#include <cmath>
#include <set>

#include "advlab/errors.hpp"
#include "advlab/pixel_transforms.hpp"
#include "advlab/rng.hpp"

#include "test_models.hpp"

using namespace advlab;

namespace {

Image random_image(int h, int w, int c, std::uint64_t seed) {
    Rng rng(SeedStream::root(seed));
    Image img(h, w, c);
    for (float& v : img.data) v = float(rng.next_double());
    return img;
}

double mean_abs_err(const Image& a, const Image& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        s += std::fabs(double(a.data[i]) - double(b.data[i]));
    return s / double(a.data.size());
}

} // namespace

TEST_CASE("bit depth reduction") {
    for (int bits = 1; bits <= 8; ++bits) {
        Image x(2, 2, 1);
        x.at(0, 0, 0) = 0.0f;
        x.at(0, 1, 0) = 1.0f;
        x.at(1, 0, 0) = 0.5f;
        x.at(1, 1, 0) = 0.3f;
        Image y = bit_depth_reduce(x, bits);
        CHECK(y.at(0, 0, 0) == 0.0f); // endpoints representable
        CHECK(y.at(0, 1, 0) == 1.0f);
        CHECK(bit_depth_reduce(y, bits).data == y.data); // idempotent
    }
    // ties away from zero: 0.5 * 7 = 3.5 -> 4
    Image half(1, 1, 1, 0.5f);
    CHECK(bit_depth_reduce(half, 3).at(0, 0, 0) == doctest::Approx(4.0 / 7.0).epsilon(1e-7));

    // at most 2^b distinct values per channel
    Image x = random_image(16, 16, 3, 1);
    for (int bits : {1, 2, 3}) {
        Image y = bit_depth_reduce(x, bits);
        for (int c = 0; c < 3; ++c) {
            std::set<float> values;
            for (int i = 0; i < 16; ++i)
                for (int j = 0; j < 16; ++j) values.insert(y.at(i, j, c));
            CHECK(int(values.size()) <= (1 << bits));
        }
    }
    CHECK_THROWS_AS(bit_depth_reduce(x, 0), InvalidInputError);
    CHECK_THROWS_AS(bit_depth_reduce(x, 9), InvalidInputError);
}

TEST_CASE("jpeg constant images stay constant") {
    for (int q : {10, 25, 50, 75, 95, 100}) {
        Image gray(24, 17, 3, 0.5f); // non-multiple-of-8 sides on purpose
        Image out = jpeg_roundtrip(gray, {q});
        float lo = 1.0f, hi = 0.0f;
        for (float v : out.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(hi - lo <= 1e-6f);                       // output is constant
        CHECK(std::fabs(out.data[0] - 0.5f) <= 1.0f / 255.0f); // and near the input level
    }
    // a second constant: uniformity holds at every quality
    for (int q : {10, 75}) {
        Image c(16, 16, 3, 0.8f);
        Image out = jpeg_roundtrip(c, {q});
        float lo = 1.0f, hi = 0.0f;
        for (float v : out.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(hi - lo <= 1e-6f);
    }
}

TEST_CASE("jpeg quality 100 error bound and monotonicity") {
    Image x = random_image(32, 32, 3, 9);
    Image best = jpeg_roundtrip(x, {100});
    double max_err = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i)
        max_err = std::max(max_err, std::fabs(double(x.data[i]) - double(best.data[i])));
    CHECK(max_err <= 4.0 / 255.0);

    double prev = 1e9;
    for (int q : {10, 25, 50, 75, 95}) {
        double err = mean_abs_err(x, jpeg_roundtrip(x, {q}));
        CHECK(err <= prev + 1e-12);
        prev = err;
    }

    // determinism
    CHECK(jpeg_roundtrip(x, {75}).data == jpeg_roundtrip(x, {75}).data);
    CHECK_THROWS_AS(jpeg_roundtrip(x, {0}), InvalidInputError);
    CHECK_THROWS_AS(jpeg_roundtrip(x, {101}), InvalidInputError);
}

TEST_CASE("crop rescale sampling") {
    Image x = random_image(32, 32, 3, 13);
    CropConfig full{4, 1.0};
    SeedStream s = SeedStream::root(5);
    std::vector<Image> crops = crop_rescale_samples(x, full, s);
    REQUIRE(crops.size() == 4);
    for (const Image& c : crops) CHECK(c.data == x.data); // identity at fraction 1

    // paper geometry at desk scale: side round(90/224 * 32) = 13
    CHECK(std::lround(90.0 / 224.0 * 32) == 13);

    CropConfig paper{8, 90.0 / 224.0};
    std::vector<Image> a = crop_rescale_samples(x, paper, s);
    std::vector<Image> b = crop_rescale_samples(x, paper, s);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].data == b[i].data); // same seed, same crops
        CHECK(a[i].height == 32);
        CHECK(a[i].width == 32);
    }
    bool any_diff = false;
    for (std::size_t i = 1; i < a.size(); ++i) any_diff |= a[i].data != a[0].data;
    CHECK(any_diff);

    CHECK_THROWS_AS(crop_rescale_samples(x, {0, 0.5}, s), InvalidInputError);
    Image tiny(2, 2, 3, 0.5f);
    CHECK_THROWS_AS(crop_rescale_samples(tiny, {1, 0.1}, s), InvalidInputError);
}

TEST_CASE("crop ensemble prediction") {
    using testing::LinearModel;
    // 2x2 single-channel input, 3 classes
    LinearModel model(2, 2, 1,
                      {{1.0, 0.0, -0.3, 0.2}, {0.0, 1.0, 0.1, -0.2}, {0.5, 0.5, 0.0, 0.4}},
                      {0.1, 0.0, -0.1});
    Image x(2, 2, 1);
    x.at(0, 0, 0) = 0.7f;
    x.at(0, 1, 0) = 0.2f;
    x.at(1, 0, 0) = 0.9f;
    x.at(1, 1, 0) = 0.4f;

    SeedStream s = SeedStream::root(3);
    std::vector<double> one = crop_ensemble_predict(model, x, {1, 1.0}, s);
    std::vector<double> z = classifier_logits(model, x);
    std::vector<double> direct(z.size());
    softmax(z.data(), int(z.size()), direct.data());
    for (std::size_t k = 0; k < direct.size(); ++k)
        CHECK(one[k] == doctest::Approx(direct[k]).epsilon(1e-12));

    std::vector<double> many = crop_ensemble_predict(model, x, {7, 1.0}, s);
    double sum = 0.0;
    for (double p : many) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}
