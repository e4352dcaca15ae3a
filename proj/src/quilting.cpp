#include "advlab/quilting.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "advlab/errors.hpp"

namespace advlab {

namespace {

constexpr char kDbMagic[4] = {'A', 'P', 'D', 'B'};
constexpr std::uint32_t kDbVersion = 1;

void put_u32(std::FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    if (std::fwrite(b, 1, 4, f) != 4) throw FormatError("patch db write failed");
}

void put_u64(std::FILE* f, std::uint64_t v) {
    put_u32(f, std::uint32_t(v));
    put_u32(f, std::uint32_t(v >> 32));
}

std::uint32_t get_u32(std::FILE* f) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw FormatError("patch db truncated");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

std::uint64_t get_u64(std::FILE* f) {
    std::uint64_t lo = get_u32(f), hi = get_u32(f);
    return lo | hi << 32;
}

} // namespace

void PatchDatabase::build_index() {
    patches_d.assign(patches.begin(), patches.end());
    sqnorm_d.resize(std::size_t(count));
    int d = dim();
    for (std::int64_t i = 0; i < count; ++i) {
        double s = 0.0;
        const double* p = patches_d.data() + std::size_t(i) * d;
        for (int j = 0; j < d; ++j) s += p[j] * p[j];
        sqnorm_d[std::size_t(i)] = s;
    }
}

PatchDatabase build_patch_database(const std::vector<Image>& images, int patch_size, int count,
                                   std::uint64_t seed) {
    if (count < 1) throw InvalidInputError("build_patch_database: count must be >= 1");
    if (images.empty()) throw InvalidInputError("build_patch_database: no source images");
    for (const Image& img : images)
        if (img.height < patch_size || img.width < patch_size)
            throw InvalidInputError("build_patch_database: image smaller than patch");
    PatchDatabase db;
    db.patch_size = patch_size;
    db.channels = images[0].channels;
    db.count = count;
    db.source_seed = seed;
    db.patches.resize(std::size_t(count) * db.dim());
    Rng rng(SeedStream::root(seed));
    for (int i = 0; i < count; ++i) {
        const Image& img = images[rng.below(images.size())];
        int oy = rng.uniform_int(0, img.height - patch_size);
        int ox = rng.uniform_int(0, img.width - patch_size);
        float* dst = db.patches.data() + std::size_t(i) * db.dim();
        for (int dy = 0; dy < patch_size; ++dy)
            for (int dx = 0; dx < patch_size; ++dx)
                for (int c = 0; c < db.channels; ++c)
                    *dst++ = img.at(oy + dy, ox + dx, c);
    }
    db.build_index();
    return db;
}

void save_patch_database(const PatchDatabase& db, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw FormatError("cannot open patch db for writing: " + path);
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> guard(f, std::fclose);
    if (std::fwrite(kDbMagic, 1, 4, f) != 4) throw FormatError("patch db write failed");
    put_u32(f, kDbVersion);
    put_u32(f, std::uint32_t(db.patch_size));
    put_u32(f, std::uint32_t(db.channels));
    put_u64(f, std::uint64_t(db.count));
    put_u64(f, db.source_seed);
    if (std::fwrite(db.patches.data(), 4, db.patches.size(), f) != db.patches.size())
        throw FormatError("patch db write failed");
}

PatchDatabase load_patch_database(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw FormatError("cannot open patch db: " + path);
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> guard(f, std::fclose);
    char magic[4];
    if (std::fread(magic, 1, 4, f) != 4) throw FormatError("patch db truncated");
    if (std::memcmp(magic, kDbMagic, 4) != 0) throw FormatError("bad patch db magic");
    std::uint32_t version = get_u32(f);
    if (version != kDbVersion) throw VersionError("unsupported patch db version");
    PatchDatabase db;
    db.patch_size = int(get_u32(f));
    db.channels = int(get_u32(f));
    db.count = std::int64_t(get_u64(f));
    db.source_seed = get_u64(f);
    if (db.patch_size < 1 || db.channels < 1 || db.count < 1)
        throw FormatError("patch db header out of range");
    db.patches.resize(std::size_t(db.count) * db.dim());
    if (std::fread(db.patches.data(), 4, db.patches.size(), f) != db.patches.size())
        throw FormatError("patch db truncated");
    db.build_index();
    return db;
}

void knn_batch(const PatchDatabase& db, const double* queries, int num_queries, int k,
               int* out_indices) {
    if (k < 1 || std::int64_t(k) > db.count)
        throw InvalidInputError("knn: K out of range for database");
    if (db.patches_d.empty())
        throw InvalidInputError("knn: database index not built");
    int d = db.dim();
    std::int64_t n = db.count;
    // cross terms: G[q][p] = query_q . patch_p
    std::vector<double> cross(std::size_t(num_queries) * n);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, num_queries, int(n), d, 1.0, queries,
                d, db.patches_d.data(), d, 0.0, cross.data(), int(n));
    std::vector<std::pair<double, std::int64_t>> top; // (distance, index), ascending
    for (int q = 0; q < num_queries; ++q) {
        double qn = 0.0;
        const double* qv = queries + std::size_t(q) * d;
        for (int j = 0; j < d; ++j) qn += qv[j] * qv[j];
        const double* g = cross.data() + std::size_t(q) * n;
        top.clear();
        for (std::int64_t p = 0; p < n; ++p) {
            double dist = qn - 2.0 * g[p] + db.sqnorm_d[std::size_t(p)];
            if (int(top.size()) == k &&
                (dist > top.back().first ||
                 (dist == top.back().first && p > top.back().second)))
                continue;
            auto pos = std::upper_bound(top.begin(), top.end(), std::make_pair(dist, p));
            top.insert(pos, {dist, p});
            if (int(top.size()) > k) top.pop_back();
        }
        for (int i = 0; i < k; ++i) out_indices[std::size_t(q) * k + i] = int(top[i].second);
    }
}

std::vector<int> knn_patches(const PatchDatabase& db, const float* query, int k) {
    int d = db.dim();
    std::vector<double> q(query, query + d);
    std::vector<int> out(k);
    knn_batch(db, q.data(), 1, k, out.data());
    return out;
}

std::vector<int> min_error_boundary_cut(const std::vector<double>& err, int rows, int cols,
                                        SeamOrientation orientation) {
    // Horizontal seams run the same DP with rows and columns swapped.
    int n = orientation == SeamOrientation::Vertical ? rows : cols;
    int m = orientation == SeamOrientation::Vertical ? cols : rows;
    if (n < 1 || m < 1) throw InvalidInputError("boundary cut: overlap too small");
    auto e = [&](int step, int pos) {
        return orientation == SeamOrientation::Vertical ? err[std::size_t(step) * cols + pos]
                                                        : err[std::size_t(pos) * cols + step];
    };
    std::vector<double> cost(std::size_t(n) * m);
    std::vector<int> back(std::size_t(n) * m, 0);
    for (int j = 0; j < m; ++j) cost[j] = e(0, j);
    for (int i = 1; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            int lo = std::max(0, j - 1), hi = std::min(m - 1, j + 1);
            int arg = lo; // leftmost minimal predecessor
            for (int t = lo + 1; t <= hi; ++t)
                if (cost[std::size_t(i - 1) * m + t] < cost[std::size_t(i - 1) * m + arg])
                    arg = t;
            cost[std::size_t(i) * m + j] = cost[std::size_t(i - 1) * m + arg] + e(i, j);
            back[std::size_t(i) * m + j] = arg;
        }
    int arg = 0;
    for (int j = 1; j < m; ++j)
        if (cost[std::size_t(n - 1) * m + j] < cost[std::size_t(n - 1) * m + arg]) arg = j;
    std::vector<int> path(n);
    path[n - 1] = arg;
    for (int i = n - 1; i > 0; --i) {
        arg = back[std::size_t(i) * m + arg];
        path[i - 1] = arg;
    }
    return path;
}

std::vector<int> min_error_boundary_cut(const Image& overlap_existing,
                                        const Image& overlap_candidate,
                                        SeamOrientation orientation) {
    if (!overlap_existing.same_shape(overlap_candidate))
        throw InvalidInputError("boundary cut: overlap shape mismatch");
    int rows = overlap_existing.height, cols = overlap_existing.width;
    std::vector<double> err(std::size_t(rows) * cols, 0.0);
    for (int y = 0; y < rows; ++y)
        for (int x = 0; x < cols; ++x)
            for (int c = 0; c < overlap_existing.channels; ++c) {
                double d = double(overlap_existing.at(y, x, c)) -
                           double(overlap_candidate.at(y, x, c));
                err[std::size_t(y) * cols + x] += d * d;
            }
    return min_error_boundary_cut(err, rows, cols, orientation);
}

namespace {

std::vector<int> grid_positions(int extent, int patch, int stride) {
    std::vector<int> pos;
    for (int p = 0; p + patch <= extent; p += stride) pos.push_back(p);
    if (pos.back() != extent - patch) pos.push_back(extent - patch); // clamp last cell
    return pos;
}

} // namespace

Image quilt(const Image& x, const PatchDatabase& db, const QuiltConfig& cfg,
            std::vector<PatchProvenance>* provenance) {
    if (cfg.patch_size != db.patch_size)
        throw InvalidInputError("quilt: config patch size does not match database");
    if (x.channels != db.channels) throw InvalidInputError("quilt: channel mismatch");
    if (x.height < cfg.patch_size || x.width < cfg.patch_size)
        throw InvalidInputError("quilt: image smaller than patch");
    if (cfg.overlap < 1 || cfg.overlap >= cfg.patch_size)
        throw InvalidInputError("quilt: overlap must be in (0, patch_size)");
    if (cfg.k < 1 || std::int64_t(cfg.k) > db.count)
        throw InvalidInputError("quilt: K out of range");
    if (db.count < 1) throw InvalidInputError("quilt: empty database");

    const int p = cfg.patch_size, ch = x.channels, d = db.dim();
    const int stride = p - cfg.overlap;
    std::vector<int> ys = grid_positions(x.height, p, stride);
    std::vector<int> xs = grid_positions(x.width, p, stride);

    // All KNN queries in one GEMM pass.
    int cells = int(ys.size() * xs.size());
    std::vector<double> queries(std::size_t(cells) * d);
    for (int gi = 0; gi < int(ys.size()); ++gi)
        for (int gj = 0; gj < int(xs.size()); ++gj) {
            double* q = queries.data() + (std::size_t(gi) * xs.size() + gj) * d;
            for (int dy = 0; dy < p; ++dy)
                for (int dx = 0; dx < p; ++dx)
                    for (int c = 0; c < ch; ++c)
                        *q++ = x.at(ys[gi] + dy, xs[gj] + dx, c);
        }
    std::vector<int> knn(std::size_t(cells) * cfg.k);
    knn_batch(db, queries.data(), cells, cfg.k, knn.data());

    Image out(x.height, x.width, ch);
    std::vector<PatchProvenance> prov;
    if (provenance) prov.resize(out.size());
    Rng rng(cfg.stream);

    std::vector<double> err(std::size_t(p) * p);
    for (int gi = 0; gi < int(ys.size()); ++gi)
        for (int gj = 0; gj < int(xs.size()); ++gj) {
            int cell = gi * int(xs.size()) + gj;
            int pick = cfg.k == 1 ? knn[std::size_t(cell) * cfg.k]
                                  : knn[std::size_t(cell) * cfg.k + int(rng.below(cfg.k))];
            const float* patch = db.patch(pick);
            int oy = ys[gi], ox = xs[gj];
            int ov_top = gi > 0 ? ys[gi - 1] + p - oy : 0;
            int ov_left = gj > 0 ? xs[gj - 1] + p - ox : 0;

            // take[dy][dx]: true = candidate patch pixel, false = keep existing
            std::vector<std::uint8_t> take(std::size_t(p) * p, 1);
            if (ov_left > 0) {
                err.assign(std::size_t(p) * ov_left, 0.0);
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < ov_left; ++dx)
                        for (int c = 0; c < ch; ++c) {
                            double diff = double(out.at(oy + dy, ox + dx, c)) -
                                          double(patch[(dy * p + dx) * ch + c]);
                            err[std::size_t(dy) * ov_left + dx] += diff * diff;
                        }
                std::vector<int> seam =
                    min_error_boundary_cut(err, p, ov_left, SeamOrientation::Vertical);
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < seam[dy]; ++dx) take[std::size_t(dy) * p + dx] = 0;
            }
            if (ov_top > 0) {
                err.assign(std::size_t(ov_top) * p, 0.0);
                for (int dy = 0; dy < ov_top; ++dy)
                    for (int dx = 0; dx < p; ++dx)
                        for (int c = 0; c < ch; ++c) {
                            double diff = double(out.at(oy + dy, ox + dx, c)) -
                                          double(patch[(dy * p + dx) * ch + c]);
                            err[std::size_t(dy) * p + dx] += diff * diff;
                        }
                std::vector<int> seam =
                    min_error_boundary_cut(err, ov_top, p, SeamOrientation::Horizontal);
                for (int dx = 0; dx < p; ++dx)
                    for (int dy = 0; dy < seam[dx]; ++dy) take[std::size_t(dy) * p + dx] = 0;
            }
            for (int dy = 0; dy < p; ++dy)
                for (int dx = 0; dx < p; ++dx) {
                    if (!take[std::size_t(dy) * p + dx]) continue;
                    for (int c = 0; c < ch; ++c) {
                        int off = (dy * p + dx) * ch + c;
                        out.at(oy + dy, ox + dx, c) = patch[off];
                        if (provenance) {
                            std::size_t oi =
                                (std::size_t(oy + dy) * x.width + (ox + dx)) * ch + c;
                            prov[oi] = {pick, off};
                        }
                    }
                }
        }
    if (provenance) *provenance = std::move(prov);
    return out;
}

} // namespace advlab
