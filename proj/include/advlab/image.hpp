#pragma once

#include <cstddef>
#include <vector>

namespace advlab {

// Unit-interval image tensor, row-major with channel innermost:
// data[(y * width + x) * channels + c].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c), data(std::size_t(h) * w * c, fill) {}

    std::size_t size() const { return data.size(); }

    float& at(int y, int x, int c) { return data[(std::size_t(y) * width + x) * channels + c]; }
    float at(int y, int x, int c) const {
        return data[(std::size_t(y) * width + x) * channels + c];
    }

    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

struct LabeledExample {
    Image image;
    int label = 0;
};

// Saturates every element into [0, 1]. Elements already inside are untouched.
// Throws InvalidInputError on non-finite input.
Image clip01(const Image& image);

// Eq.-style batch metric: (1/N) * sum_n ||x_n - x'_n||_2 / ||x_n||_2.
// Throws InvalidInputError on empty/mismatched batches or a zero-norm original.
double normalized_l2_dissimilarity(const std::vector<Image>& originals,
                                   const std::vector<Image>& perturbed);

// Per-pair norms used by attack bookkeeping.
double l2_distance(const Image& a, const Image& b);
double linf_distance(const Image& a, const Image& b);

std::vector<double> to_doubles(const Image& img);
Image from_doubles(const std::vector<double>& v, int h, int w, int c);

} // namespace advlab
