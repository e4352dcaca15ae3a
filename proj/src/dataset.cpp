#include "advlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "advlab/errors.hpp"
#include "advlab/tensor_io.hpp"

namespace fs = std::filesystem;

namespace advlab {

namespace {

constexpr int kSide = 32;

struct Rgb {
    float r, g, b;
};

// Two palettes of three fill colors each; palette choice is half the label.
const Rgb kPaletteA[3] = {{0.85f, 0.15f, 0.12f}, {0.90f, 0.55f, 0.10f}, {0.92f, 0.85f, 0.15f}};
const Rgb kPaletteB[3] = {{0.10f, 0.30f, 0.85f}, {0.10f, 0.80f, 0.85f}, {0.15f, 0.75f, 0.20f}};

// Signed distance to the shape boundary, negative inside. Shapes are sized
// by `r` around (cy, cx).
double shape_sdf(int shape, double y, double x, double cy, double cx, double r) {
    double dy = y - cy, dx = x - cx;
    switch (shape) {
        case 0: // circle
            return std::sqrt(dy * dy + dx * dx) - r;
        case 1: { // square
            double ay = std::fabs(dy) - r * 0.82, ax = std::fabs(dx) - r * 0.82;
            return std::max(ay, ax);
        }
        case 2: { // triangle (upward)
            double q = 0.866025403784; // cos(30 deg)
            double d1 = dy - r * 0.75;                    // base below centroid
            double d2 = -dy * 0.5 - dx * q - r * 0.375;   // left edge
            double d3 = -dy * 0.5 + dx * q - r * 0.375;   // right edge
            return std::max({d1, d2, d3});
        }
        case 3: { // cross
            double arm = r * 0.38;
            double v = std::max(std::fabs(dx) - arm, std::fabs(dy) - r);
            double h = std::max(std::fabs(dy) - arm, std::fabs(dx) - r);
            return std::min(v, h);
        }
        default: { // ring
            double d = std::sqrt(dy * dy + dx * dx);
            return std::max(d - r, (r * 0.55) - d);
        }
    }
}

float smoothstep01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return float(t * t * (3.0 - 2.0 * t));
}

} // namespace

Image synth_shape_image(int class_id, SeedStream stream) {
    if (class_id < 0 || class_id >= 10)
        throw InvalidInputError("synth_shape_image: class out of range");
    Rng rng(stream);
    int shape = class_id % 5;
    const Rgb* palette = class_id < 5 ? kPaletteA : kPaletteB;
    Rgb fill = palette[rng.uniform_int(0, 2)];

    double base = rng.uniform(0.25, 0.60);
    double cy = kSide / 2.0 + rng.uniform(-4.0, 4.0);
    double cx = kSide / 2.0 + rng.uniform(-4.0, 4.0);
    double r = rng.uniform(8.0, 12.5);
    double jr = rng.uniform(-0.05, 0.05), jg = rng.uniform(-0.05, 0.05),
           jb = rng.uniform(-0.05, 0.05);

    Image img(kSide, kSide, 3);
    for (int y = 0; y < kSide; ++y)
        for (int x = 0; x < kSide; ++x) {
            double n = rng.uniform(-0.08, 0.08);
            float bg = float(base + n);
            double sd = shape_sdf(shape, y + 0.5, x + 0.5, cy, cx, r);
            float a = smoothstep01(0.5 - sd); // ~1 inside, ~0 outside, soft 1px edge
            float px[3] = {float(fill.r + jr), float(fill.g + jg), float(fill.b + jb)};
            for (int c = 0; c < 3; ++c) {
                float v = a * px[c] + (1.0f - a) * bg;
                img.at(y, x, c) = std::clamp(v, 0.0f, 1.0f);
            }
        }
    return img;
}

Dataset generate_synthetic(int num_classes, int per_class, std::uint64_t seed) {
    if (num_classes < 2 || num_classes > 10)
        throw InvalidInputError("generate_synthetic: num_classes must be in [2,10]");
    if (per_class < 1) throw InvalidInputError("generate_synthetic: per_class must be >= 1");
    Dataset ds;
    ds.num_classes = num_classes;
    SeedStream root = SeedStream::root(seed);
    // Interleave classes so any prefix of the dataset is class-balanced.
    for (int i = 0; i < per_class; ++i)
        for (int k = 0; k < num_classes; ++k) {
            LabeledExample ex;
            ex.label = k;
            ex.image = synth_shape_image(k, root.child(std::uint64_t(k), std::uint64_t(i)));
            ds.examples.push_back(std::move(ex));
        }
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "images");
    std::ofstream csv(fs::path(dir) / "labels.csv");
    if (!csv) throw FormatError("cannot write labels.csv under " + dir);
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05zu.png", i);
        save_png(ds.examples[i].image, (fs::path(dir) / "images" / name).string());
        csv << "images/" << name << "," << ds.examples[i].label << "\n";
    }
}

Dataset load_dataset_dir(const std::string& dir) {
    std::ifstream csv(fs::path(dir) / "labels.csv");
    if (!csv) throw FormatError("missing labels.csv under " + dir);
    Dataset ds;
    std::string line;
    int max_label = -1;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        auto comma = line.find_last_of(',');
        if (comma == std::string::npos) throw FormatError("bad labels.csv row: " + line);
        LabeledExample ex;
        ex.label = std::stoi(line.substr(comma + 1));
        if (ex.label < 0) throw InvalidInputError("negative label in " + dir);
        ex.image = load_png((fs::path(dir) / line.substr(0, comma)).string());
        max_label = std::max(max_label, ex.label);
        ds.examples.push_back(std::move(ex));
    }
    if (ds.examples.empty()) throw FormatError("empty dataset: " + dir);
    ds.num_classes = max_label + 1;
    if (ds.num_classes < 2) throw InvalidInputError("dataset needs at least 2 classes");
    return ds;
}

Dataset resolve(const DatasetSpec& spec) {
    if (!spec.dir.empty()) return load_dataset_dir(spec.dir);
    return generate_synthetic(spec.num_classes, spec.per_class, spec.seed);
}

} // namespace advlab
