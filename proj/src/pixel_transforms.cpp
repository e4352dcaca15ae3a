#include "advlab/pixel_transforms.hpp"

#include <algorithm>
#include <cmath>

#include "advlab/errors.hpp"

namespace advlab {

Image bit_depth_reduce(const Image& x, int bits) {
    if (bits < 1 || bits > 8) throw InvalidInputError("bit_depth_reduce: bits must be in [1,8]");
    double levels = double((1 << bits) - 1);
    Image out = x;
    for (float& v : out.data) v = float(std::round(double(v) * levels) / levels);
    return out;
}

namespace {

// ITU-T T.81 Annex K quantization tables.
const int kLumaQ[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
const int kChromaQ[64] = {17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
                          24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
                          99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                          99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

void scale_table(const int* base, int quality, int* out) {
    int s = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    for (int i = 0; i < 64; ++i) out[i] = std::clamp((base[i] * s + 50) / 100, 1, 255);
}

// Orthonormal 8-point DCT-II basis, M[u][n].
struct DctBasis {
    double m[8][8];
    DctBasis() {
        const double pi = 3.14159265358979323846;
        for (int u = 0; u < 8; ++u) {
            double c = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int n = 0; n < 8; ++n) m[u][n] = c * std::cos((2 * n + 1) * u * pi / 16.0);
        }
    }
};
const DctBasis kDct;

// block: 8x8 row-major. fwd: B = M A M^T; inv: A = M^T B M.
void dct8x8(const double* in, double* out, bool forward) {
    double tmp[64];
    for (int u = 0; u < 8; ++u)
        for (int n = 0; n < 8; ++n) {
            double s = 0.0;
            for (int t = 0; t < 8; ++t)
                s += (forward ? kDct.m[u][t] : kDct.m[t][u]) * in[t * 8 + n];
            tmp[u * 8 + n] = s;
        }
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int t = 0; t < 8; ++t)
                s += tmp[u * 8 + t] * (forward ? kDct.m[v][t] : kDct.m[t][v]);
            out[u * 8 + v] = s;
        }
}

// One padded channel plane through DCT -> quantize -> dequantize -> IDCT.
void codec_plane(std::vector<double>& plane, int ph, int pw, const int* q) {
    double block[64], coef[64];
    for (int by = 0; by < ph; by += 8)
        for (int bx = 0; bx < pw; bx += 8) {
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < 8; ++j) block[i * 8 + j] = plane[(by + i) * pw + bx + j] - 128.0;
            dct8x8(block, coef, true);
            for (int i = 0; i < 64; ++i) coef[i] = std::round(coef[i] / q[i]) * q[i];
            dct8x8(coef, block, false);
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < 8; ++j) plane[(by + i) * pw + bx + j] = block[i * 8 + j] + 128.0;
        }
}

} // namespace

Image jpeg_roundtrip(const Image& x, const JpegConfig& cfg) {
    if (cfg.quality < 1 || cfg.quality > 100)
        throw InvalidInputError("jpeg_roundtrip: quality must be in [1,100]");
    if (x.channels != 1 && x.channels != 3)
        throw InvalidInputError("jpeg_roundtrip: channels must be 1 or 3");
    int lq[64], cq[64];
    scale_table(kLumaQ, cfg.quality, lq);
    scale_table(kChromaQ, cfg.quality, cq);

    int ph = (x.height + 7) / 8 * 8, pw = (x.width + 7) / 8 * 8;
    int planes_n = x.channels == 3 ? 3 : 1;
    std::vector<std::vector<double>> planes(planes_n,
                                            std::vector<double>(std::size_t(ph) * pw));
    // Color convert on the 0..255 scale, replicate edges into the padding.
    for (int y = 0; y < ph; ++y)
        for (int xx = 0; xx < pw; ++xx) {
            int sy = std::min(y, x.height - 1), sx = std::min(xx, x.width - 1);
            if (planes_n == 1) {
                planes[0][std::size_t(y) * pw + xx] = 255.0 * x.at(sy, sx, 0);
            } else {
                double r = 255.0 * x.at(sy, sx, 0), g = 255.0 * x.at(sy, sx, 1),
                       b = 255.0 * x.at(sy, sx, 2);
                planes[0][std::size_t(y) * pw + xx] = 0.299 * r + 0.587 * g + 0.114 * b;
                planes[1][std::size_t(y) * pw + xx] =
                    -0.168735892 * r - 0.331264108 * g + 0.5 * b + 128.0;
                planes[2][std::size_t(y) * pw + xx] =
                    0.5 * r - 0.418687589 * g - 0.081312411 * b + 128.0;
            }
        }
    for (int p = 0; p < planes_n; ++p) codec_plane(planes[p], ph, pw, p == 0 ? lq : cq);

    Image out(x.height, x.width, x.channels);
    for (int y = 0; y < x.height; ++y)
        for (int xx = 0; xx < x.width; ++xx) {
            std::size_t i = std::size_t(y) * pw + xx;
            if (planes_n == 1) {
                out.at(y, xx, 0) = float(std::clamp(planes[0][i] / 255.0, 0.0, 1.0));
            } else {
                double yy = planes[0][i], cb = planes[1][i] - 128.0, cr = planes[2][i] - 128.0;
                double r = yy + 1.402 * cr;
                double g = yy - 0.344136286 * cb - 0.714136286 * cr;
                double b = yy + 1.772 * cb;
                out.at(y, xx, 0) = float(std::clamp(r / 255.0, 0.0, 1.0));
                out.at(y, xx, 1) = float(std::clamp(g / 255.0, 0.0, 1.0));
                out.at(y, xx, 2) = float(std::clamp(b / 255.0, 0.0, 1.0));
            }
        }
    return out;
}

Image crop_image(const Image& x, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || y0 + h > x.height || x0 + w > x.width || h < 1 || w < 1)
        throw InvalidInputError("crop_image: window out of bounds");
    Image out(h, w, x.channels);
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int c = 0; c < x.channels; ++c) out.at(y, xx, c) = x.at(y0 + y, x0 + xx, c);
    return out;
}

Image bilinear_resize(const Image& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw InvalidInputError("bilinear_resize: bad output size");
    Image out(out_h, out_w, x.channels);
    double sy = double(x.height) / out_h, sx = double(x.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = int(std::floor(fy));
        double wy = fy - y0;
        int ya = std::clamp(y0, 0, x.height - 1), yb = std::clamp(y0 + 1, 0, x.height - 1);
        for (int xx = 0; xx < out_w; ++xx) {
            double fx = (xx + 0.5) * sx - 0.5;
            int x0 = int(std::floor(fx));
            double wx = fx - x0;
            int xa = std::clamp(x0, 0, x.width - 1), xb = std::clamp(x0 + 1, 0, x.width - 1);
            for (int c = 0; c < x.channels; ++c) {
                double v = (1.0 - wy) * ((1.0 - wx) * x.at(ya, xa, c) + wx * x.at(ya, xb, c)) +
                           wy * ((1.0 - wx) * x.at(yb, xa, c) + wx * x.at(yb, xb, c));
                out.at(y, xx, c) = float(v);
            }
        }
    }
    return out;
}

namespace {

int crop_side(const Image& x, double crop_fraction) {
    if (crop_fraction <= 0.0 || crop_fraction > 1.0)
        throw InvalidInputError("crop fraction must be in (0,1]");
    int side = int(std::lround(crop_fraction * std::min(x.height, x.width)));
    if (side < 1) throw InvalidInputError("crop side degenerates to < 1 pixel");
    return side;
}

} // namespace

Image crop_rescale_draw(const Image& x, double crop_fraction, SeedStream stream) {
    int side = crop_side(x, crop_fraction);
    Rng rng(stream);
    int oy = rng.uniform_int(0, x.height - side);
    int ox = rng.uniform_int(0, x.width - side);
    return bilinear_resize(crop_image(x, oy, ox, side, side), x.height, x.width);
}

std::vector<Image> crop_rescale_samples(const Image& x, const CropConfig& cfg,
                                        SeedStream stream) {
    if (cfg.num_crops < 1) throw InvalidInputError("num_crops must be >= 1");
    int side = crop_side(x, cfg.crop_fraction);
    Rng rng(stream);
    std::vector<Image> out;
    out.reserve(cfg.num_crops);
    for (int n = 0; n < cfg.num_crops; ++n) {
        int oy = rng.uniform_int(0, x.height - side);
        int ox = rng.uniform_int(0, x.width - side);
        out.push_back(bilinear_resize(crop_image(x, oy, ox, side, side), x.height, x.width));
    }
    return out;
}

std::vector<double> crop_ensemble_predict(const Classifier& model, const Image& x,
                                          const CropConfig& cfg, SeedStream stream) {
    std::vector<Image> crops = crop_rescale_samples(x, cfg, stream);
    int k = model.num_classes();
    std::vector<double> mean(k, 0.0), probs(k);
    for (const Image& crop : crops) {
        std::vector<double> z = classifier_logits(model, crop);
        softmax(z.data(), k, probs.data());
        for (int i = 0; i < k; ++i) mean[i] += probs[i];
    }
    for (int i = 0; i < k; ++i) mean[i] /= double(crops.size());
    return mean;
}

} // namespace advlab
