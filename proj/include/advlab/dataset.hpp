#pragma once

#include <string>
#include <vector>

#include "advlab/image.hpp"
#include "advlab/rng.hpp"

namespace advlab {

// Either a directory of PNGs with a labels.csv (`filename,label` rows), or a
// procedural generator config.
struct DatasetSpec {
    // directory source
    std::string dir; // empty => synthetic
    // synthetic source
    int num_classes = 10;
    int per_class = 100;
    std::uint64_t seed = 0;
};

struct Dataset {
    std::vector<LabeledExample> examples;
    int num_classes = 0;
};

// 10 classes of 32x32 colored shapes (circle/square/triangle/cross/ring x 2
// palettes) on gray noise backgrounds. Deterministic per seed.
Image synth_shape_image(int class_id, SeedStream stream);
Dataset generate_synthetic(int num_classes, int per_class, std::uint64_t seed);

// Writes images/img_#####.png plus labels.csv into dir.
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset_dir(const std::string& dir);

Dataset resolve(const DatasetSpec& spec);

} // namespace advlab
