#include "advlab/image.hpp"

#include <cmath>

#include "advlab/errors.hpp"

namespace advlab {

Image clip01(const Image& image) {
    Image out = image;
    for (float& v : out.data) {
        if (!std::isfinite(v)) throw InvalidInputError("clip01: non-finite element");
        if (v < 0.0f) v = 0.0f;
        else if (v > 1.0f) v = 1.0f;
    }
    return out;
}

double l2_distance(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw InvalidInputError("l2_distance: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = double(a.data[i]) - double(b.data[i]);
        s += d * d;
    }
    return std::sqrt(s);
}

double linf_distance(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw InvalidInputError("linf_distance: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = std::fabs(double(a.data[i]) - double(b.data[i]));
        if (d > m) m = d;
    }
    return m;
}

double normalized_l2_dissimilarity(const std::vector<Image>& originals,
                                   const std::vector<Image>& perturbed) {
    if (originals.empty()) throw InvalidInputError("dissimilarity: empty batch");
    if (originals.size() != perturbed.size())
        throw InvalidInputError("dissimilarity: batch length mismatch");
    double acc = 0.0;
    for (std::size_t n = 0; n < originals.size(); ++n) {
        const Image& x = originals[n];
        if (!x.same_shape(perturbed[n]))
            throw InvalidInputError("dissimilarity: shape mismatch in batch");
        double norm = 0.0;
        for (float v : x.data) norm += double(v) * double(v);
        norm = std::sqrt(norm);
        if (norm == 0.0) throw InvalidInputError("dissimilarity: zero-norm original");
        acc += l2_distance(x, perturbed[n]) / norm;
    }
    return acc / double(originals.size());
}

std::vector<double> to_doubles(const Image& img) {
    return std::vector<double>(img.data.begin(), img.data.end());
}

Image from_doubles(const std::vector<double>& v, int h, int w, int c) {
    Image out(h, w, c);
    if (v.size() != out.data.size()) throw InvalidInputError("from_doubles: size mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) out.data[i] = float(v[i]);
    return out;
}

} // namespace advlab
