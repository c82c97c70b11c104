#pragma once

#include <optional>
#include <string>

#include "splatpaint/confidence.hpp"
#include "splatpaint/image.hpp"

namespace splat {

// Mean windowed SSIM over RGB channels; equal dims >= 11x11 required.
double metric_ssim(const ImageBuffer& a, const ImageBuffer& b);

// 10log10(1/MSE) over all channels, capped at 99 dB for identical inputs.
double metric_psnr(const ImageBuffer& a, const ImageBuffer& b);
constexpr double kPsnrCap = 99.0;

struct RegionReport {
    PatchRect bbox;
    double ssim = 0.0;
    double psnr_db = 0.0;
    double perceptual = 0.0;
};

// Crops both images to the mask bounding box (expanded by margin_frac) and
// reports SSIM, PSNR and perceptual distance on the crop.
RegionReport evaluate_inpaint_region(const ImageBuffer& render, const ImageBuffer& gt,
                                     const MaskImage& mask, double margin_frac = 0.1);

} // namespace splat
