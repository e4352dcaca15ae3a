#pragma once

#include <cstdio>
#include <string>

#include "advlab/image.hpp"

namespace advlab {

// Tensor file: 16-byte header ("ATNS", u32 H, u32 W, u32 C, little-endian)
// followed by H*W*C 32-bit little-endian floats, row-major, channel innermost.
void save_tensor(const Image& image, const std::string& path);
Image load_tensor(const std::string& path);

// Stream variants so files with multiple sections (checkpoints, patch
// databases) can embed tensors.
void write_tensor(std::FILE* f, const Image& image);
Image read_tensor(std::FILE* f);

// 8-bit PNG for human inspection. Writing quantizes by round(v * 255);
// reading divides by 255. Gray and gray+alpha inputs expand to RGB,
// alpha is dropped.
void save_png(const Image& image, const std::string& path);
Image load_png(const std::string& path);

} // namespace advlab
