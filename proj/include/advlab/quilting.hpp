#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advlab/image.hpp"
#include "advlab/rng.hpp"

namespace advlab {

// Flat store of square clean-image patches; vectors are (dy, dx, channel)
// row-major, matching the image layout.
struct PatchDatabase {
    int patch_size = 5;
    int channels = 3;
    std::int64_t count = 0;
    std::uint64_t source_seed = 0;
    std::vector<float> patches; // count * dim()

    int dim() const { return patch_size * patch_size * channels; }
    const float* patch(std::int64_t i) const { return patches.data() + std::size_t(i) * dim(); }

    // KNN working copies (double upcast + squared norms); built once.
    std::vector<double> patches_d, sqnorm_d;
    void build_index();
};

// count patches sampled uniformly over (image, y-offset, x-offset).
PatchDatabase build_patch_database(const std::vector<Image>& images, int patch_size, int count,
                                   std::uint64_t seed);

// File: magic "APDB", u32 version, u32 patch_size, u32 channels, u64 count,
// u64 source seed, then count*dim little-endian f32 values.
void save_patch_database(const PatchDatabase& db, const std::string& path);
PatchDatabase load_patch_database(const std::string& path);

// Exact K nearest patches under squared L2, ascending distance, ties broken
// by lower index. Distances use the expansion |q|^2 - 2 q.p + |p|^2 in double
// so batches can go through one GEMM.
std::vector<int> knn_patches(const PatchDatabase& db, const float* query, int k);
void knn_batch(const PatchDatabase& db, const double* queries, int num_queries, int k,
               int* out_indices);

enum class SeamOrientation { Vertical, Horizontal };

// Minimum-error boundary cut over an overlap's per-pixel squared error
// surface. Vertical: err is rows x cols, the returned path holds one column
// index per row, adjacent entries differ by at most 1, and columns < path[r]
// stay with the existing content. Horizontal is the transposed story (one
// row index per column; rows < path[c] stay existing). Ties take the
// leftmost (smallest-index) back-pointer.
std::vector<int> min_error_boundary_cut(const std::vector<double>& err, int rows, int cols,
                                        SeamOrientation orientation);

// Convenience wrapper computing the error surface from the two overlaps.
std::vector<int> min_error_boundary_cut(const Image& overlap_existing,
                                        const Image& overlap_candidate,
                                        SeamOrientation orientation);

struct QuiltConfig {
    int patch_size = 5;
    int overlap = 2;
    int k = 1;
    SeedStream stream;
};

// Where each output pixel came from.
struct PatchProvenance {
    std::int64_t patch_index = -1;
    int offset = -1; // flat (dy, dx, c) offset inside the patch
};

Image quilt(const Image& x, const PatchDatabase& db, const QuiltConfig& cfg,
            std::vector<PatchProvenance>* provenance = nullptr);

} // namespace advlab
