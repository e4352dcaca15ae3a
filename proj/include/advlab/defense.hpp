#pragma once

#include <optional>
#include <string>
#include <vector>

#include "advlab/image.hpp"
#include "advlab/pixel_transforms.hpp"
#include "advlab/quilting.hpp"
#include "advlab/rng.hpp"
#include "advlab/tvm.hpp"

namespace advlab {

enum class TransformKind { BitDepth, Jpeg, Tvm, Quilt, CropDraw };

struct TransformStep {
    TransformKind kind = TransformKind::BitDepth;
    int bits = 3;
    JpegConfig jpeg{};
    TvmConfig tvm{};
    QuiltConfig quilt{};
    const PatchDatabase* db = nullptr;
    double crop_fraction = 90.0 / 224.0; // CropDraw

    bool stochastic() const {
        return kind == TransformKind::Tvm || kind == TransformKind::Quilt ||
               kind == TransformKind::CropDraw;
    }
};

// An ordered list of image-to-image transforms, optionally ending in a
// crop-ensemble prediction stage (which averages predictions and therefore
// cannot be materialized as an image).
struct DefenseChain {
    std::string name; // spec string, used in reports
    std::vector<TransformStep> steps;
    bool crop_ensemble = false;
    CropConfig crop{};

    bool stochastic() const;
};

// stream must already be specific to (image, repetition); each step draws
// from stream.child(step_index), the crop stage from stream.child(#steps).
Image apply_transform(const TransformStep& step, const Image& x, SeedStream stream);
Image apply_chain_transforms(const DefenseChain& chain, const Image& x, SeedStream stream);

// Chain spec grammar: steps joined by '+', each `name[:k=v[,k=v...]]`.
//   none | bitdepth[:bits=3] | jpeg[:quality=75]
//   tvm[:lambda=0.03,keep=0.5,p=2] | quilt[:k=1,overlap=2] | crop[:n=30,frac=0.4018]
// `crop` parses as the terminal ensemble unless materialize_crop is set, in
// which case it becomes a single random crop-rescale draw.
DefenseChain parse_defense_chain(const std::string& spec, const PatchDatabase* db,
                                 bool materialize_crop = false);

} // namespace advlab
