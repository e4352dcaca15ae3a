#pragma once

#include <vector>

#include "advlab/classifier.hpp"
#include "advlab/image.hpp"
#include "advlab/rng.hpp"

namespace advlab {

struct JpegConfig {
    int quality = 75; // in [1, 100]
};

struct CropConfig {
    int num_crops = 30;
    double crop_fraction = 90.0 / 224.0;
};

// Quantize to 2^bits levels: v -> round(v * (2^bits - 1)) / (2^bits - 1),
// ties away from zero. bits in [1, 8].
Image bit_depth_reduce(const Image& x, int bits);

// Self-contained JPEG round trip: RGB->YCbCr, per-channel 8x8 DCT-II,
// quantization by the standard luma/chroma tables scaled by quality,
// dequantize, inverse DCT, YCbCr->RGB, clip. No chroma subsampling and no
// entropy coding (lossless stages are behaviorally irrelevant here).
// Arbitrary H, W: edges replicate-padded to multiples of 8, then cropped.
Image jpeg_roundtrip(const Image& x, const JpegConfig& cfg);

// Raw geometry helpers (half-pixel-centered bilinear sampling).
Image bilinear_resize(const Image& x, int out_h, int out_w);
Image crop_image(const Image& x, int y0, int x0, int h, int w);

// num_crops square crops of side round(crop_fraction * min(H, W)) at offsets
// drawn from the stream, each resized back to H x W.
std::vector<Image> crop_rescale_samples(const Image& x, const CropConfig& cfg,
                                        SeedStream stream);

// One crop draw (used when a crop must be materialized as an image-to-image
// transform, e.g. as a training-time dataset transform).
Image crop_rescale_draw(const Image& x, double crop_fraction, SeedStream stream);

// Mean softmax over the crop samples.
std::vector<double> crop_ensemble_predict(const Classifier& model, const Image& x,
                                          const CropConfig& cfg, SeedStream stream);

} // namespace advlab
