#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "advlab/errors.hpp"
#include "advlab/image.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor_io.hpp"

using namespace advlab;
namespace fs = std::filesystem;

namespace {

Image random_image(int h, int w, int c, std::uint64_t seed) {
    Rng rng(SeedStream::root(seed));
    Image img(h, w, c);
    for (float& v : img.data) v = float(rng.next_double());
    return img;
}

std::string temp_path(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("clip01 basics") {
    Image x(4, 4, 3, 0.5f);
    Image y = clip01(x);
    CHECK(y.data == x.data);

    x.at(0, 0, 0) = 1.3f;
    x.at(1, 2, 1) = -0.2f;
    y = clip01(x);
    CHECK(y.at(0, 0, 0) == 1.0f);
    CHECK(y.at(1, 2, 1) == 0.0f);
    CHECK(y.at(2, 2, 2) == 0.5f);

    Image z = random_image(8, 8, 3, 7);
    for (float& v : z.data) v = v * 4.0f - 2.0f;
    CHECK(clip01(clip01(z)).data == clip01(z).data); // idempotent

    z.at(3, 3, 0) = std::nanf("");
    CHECK_THROWS_AS(clip01(z), InvalidInputError);
}

TEST_CASE("normalized L2 dissimilarity") {
    Image a(6, 5, 3, 0.5f);
    CHECK(normalized_l2_dissimilarity({a}, {a}) == 0.0);

    Image b = a;
    for (float& v : b.data) v += 0.05f;
    double d = normalized_l2_dissimilarity({a}, {b});
    CHECK(d == doctest::Approx(0.1).epsilon(1e-5)); // element-count independent ratio

    double mean = normalized_l2_dissimilarity({a, a}, {a, b});
    CHECK(mean == doctest::Approx(d / 2.0).epsilon(1e-12));

    // batch permutation invariance
    Image c = random_image(6, 5, 3, 3);
    double d1 = normalized_l2_dissimilarity({a, b, c}, {b, c, a});
    double d2 = normalized_l2_dissimilarity({c, a, b}, {a, b, c});
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-12));

    // zero iff identical
    Image almost = a;
    almost.data[17] += 1e-4f;
    CHECK(normalized_l2_dissimilarity({a, a}, {a, almost}) > 0.0);

    CHECK_THROWS_AS(normalized_l2_dissimilarity({}, {}), InvalidInputError);
    CHECK_THROWS_AS(normalized_l2_dissimilarity({a}, {a, b}), InvalidInputError);
    Image zero(6, 5, 3, 0.0f);
    CHECK_THROWS_AS(normalized_l2_dissimilarity({zero}, {a}), InvalidInputError);
    Image other(5, 6, 3, 0.5f);
    CHECK_THROWS_AS(normalized_l2_dissimilarity({a}, {other}), InvalidInputError);
}

TEST_CASE("tensor file round trip") {
    Image x = random_image(32, 32, 3, 11);
    std::string path = temp_path("advlab_t1.atns");
    save_tensor(x, path);
    Image y = load_tensor(path);
    CHECK(y.height == 32);
    CHECK(y.width == 32);
    CHECK(y.channels == 3);
    CHECK(x.data == y.data); // bit-exact

    Image tiny(1, 1, 1, 0.3125f);
    save_tensor(tiny, path);
    Image tiny2 = load_tensor(path);
    CHECK(tiny2.data == tiny.data);

    // wrong magic
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOPE";
        f.write(reinterpret_cast<const char*>(x.data.data()), 64);
    }
    CHECK_THROWS_AS(load_tensor(path), FormatError);

    // truncated
    save_tensor(x, path);
    fs::resize_file(path, 100);
    CHECK_THROWS_AS(load_tensor(path), FormatError);
}

TEST_CASE("png round trip quantizes to 8 bits") {
    Image x = random_image(16, 12, 3, 5);
    std::string path = temp_path("advlab_t2.png");
    save_png(x, path);
    Image y = load_png(path);
    REQUIRE(y.same_shape(x));
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        float want = float(std::lround(x.data[i] * 255.0f)) / 255.0f;
        CHECK(y.data[i] == doctest::Approx(want).epsilon(1e-7));
    }
}

TEST_CASE("seed streams are stable and independent") {
    SeedStream a = SeedStream::root(42).child(1, 2, 3);
    SeedStream b = SeedStream::root(42).child(1, 2, 3);
    Rng ra(a), rb(b);
    for (int i = 0; i < 100; ++i) CHECK(ra.next_u64() == rb.next_u64());

    Rng rc(SeedStream::root(42).child(1, 2, 4));
    Rng rd(SeedStream::root(42).child(1, 2, 3));
    bool differs = false;
    for (int i = 0; i < 10; ++i) differs |= rc.next_u64() != rd.next_u64();
    CHECK(differs);

    // child derivation is order-sensitive
    CHECK(SeedStream::root(1).child(2).child(3).stream_id !=
          SeedStream::root(1).child(3).child(2).stream_id);
}
