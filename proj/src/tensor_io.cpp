#include "advlab/tensor_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <memory>

#include "advlab/errors.hpp"

namespace advlab {

namespace {

constexpr char kMagic[4] = {'A', 'T', 'N', 'S'};

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw FormatError("cannot open file: " + path);
    return f;
}

void put_u32(std::FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    if (std::fwrite(b, 1, 4, f) != 4) throw FormatError("tensor write failed");
}

std::uint32_t get_u32(std::FILE* f) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw FormatError("tensor file truncated");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

} // namespace

void write_tensor(std::FILE* f, const Image& image) {
    if (std::fwrite(kMagic, 1, 4, f) != 4) throw FormatError("tensor write failed");
    put_u32(f, std::uint32_t(image.height));
    put_u32(f, std::uint32_t(image.width));
    put_u32(f, std::uint32_t(image.channels));
    static_assert(sizeof(float) == 4);
    // Little-endian host assumed (x86/aarch64); serialize floats directly.
    if (std::fwrite(image.data.data(), 4, image.data.size(), f) != image.data.size())
        throw FormatError("tensor write failed");
}

Image read_tensor(std::FILE* f) {
    char magic[4];
    if (std::fread(magic, 1, 4, f) != 4) throw FormatError("tensor file truncated");
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad tensor magic");
    std::uint32_t h = get_u32(f), w = get_u32(f), c = get_u32(f);
    if (h == 0 || w == 0 || c == 0 || std::uint64_t(h) * w * c > (1u << 28))
        throw FormatError("tensor dimensions out of range");
    Image img{int(h), int(w), int(c)};
    if (std::fread(img.data.data(), 4, img.data.size(), f) != img.data.size())
        throw FormatError("tensor file truncated");
    return img;
}

void save_tensor(const Image& image, const std::string& path) {
    FilePtr f = open_file(path, "wb");
    write_tensor(f.get(), image);
}

Image load_tensor(const std::string& path) {
    FilePtr f = open_file(path, "rb");
    return read_tensor(f.get());
}

void save_png(const Image& image, const std::string& path) {
    if (image.channels != 1 && image.channels != 3)
        throw InvalidInputError("save_png: channels must be 1 or 3");
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw FormatError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("png write failed: " + path);
    }
    png_init_io(png, f.get());
    int color = image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, image.width, image.height, 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(std::size_t(image.width) * image.channels);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c) {
                float v = image.at(y, x, c);
                v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                row[std::size_t(x) * image.channels + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image load_png(const std::string& path) {
    FilePtr f = open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw FormatError("not a PNG file: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw FormatError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png read failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    int h = int(png_get_image_height(png, info));
    int w = int(png_get_image_width(png, info));
    if (png_get_channels(png, info) != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png decode did not yield RGB: " + path);
    }
    Image img(h, w, 3);
    std::vector<unsigned char> row(std::size_t(w) * 3);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = float(row[std::size_t(x) * 3 + c]) / 255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

} // namespace advlab
