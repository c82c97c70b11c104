#pragma once

#include <filesystem>

#include "splatpaint/image.hpp"

namespace splat {

// 8-bit RGB PNG. Values are clamped to [0,1] and quantized with round(v*255)
// on write; loaded values are k/255.
void save_png_rgb(const ImageBuffer& img, const std::filesystem::path& path);
ImageBuffer load_png_rgb(const std::filesystem::path& path);

// 8-bit grayscale mask PNG; a pixel is masked iff its byte is >= 128.
void save_png_mask(const MaskImage& mask, const std::filesystem::path& path);
MaskImage load_png_mask(const std::filesystem::path& path);

} // namespace splat
