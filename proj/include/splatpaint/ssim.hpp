#pragma once

#include <optional>
#include <vector>

#include "splatpaint/image.hpp"

namespace splat {

// Windowed SSIM with an 11x11 Gaussian window (sigma 1.5), k1=0.01, k2=0.03,
// dynamic range 1. Windows are clipped at image borders and renormalized, so
// any image size >= 1 is handled.
struct SsimOptions {
    int radius = 5;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

struct SsimResult {
    double mean = 0.0;       // over valid window positions
    size_t valid_count = 0;  // number of window positions averaged
};

// valid_window (optional): per-pixel flag marking window CENTERS to include.
// Exclusion of windows touching masked pixels is expressed by the caller via
// window_mask_from_excluded below.
SsimResult ssim_plane(const Plane& a, const Plane& b, const std::vector<uint8_t>* valid_window = nullptr,
                      const SsimOptions& opt = {});

// Same statistics plus dL/da for upstream d(mean)/d(a) = 1 (caller scales).
SsimResult ssim_plane_grad(const Plane& a, const Plane& b, std::vector<uint8_t> const* valid_window,
                           Plane& grad_a, const SsimOptions& opt = {});

// Channelwise RGB SSIM mean (average of per-channel means over the same
// window set).
SsimResult ssim_rgb(const ImageBuffer& a, const ImageBuffer& b,
                    const std::vector<uint8_t>* valid_window = nullptr, const SsimOptions& opt = {});

// Accumulates d(mean ssim)/d(a) into grad (width*height*3), scaled by
// `upstream`.
SsimResult ssim_rgb_grad(const ImageBuffer& a, const ImageBuffer& b,
                         const std::vector<uint8_t>* valid_window, double upstream,
                         std::vector<double>& grad_a, const SsimOptions& opt = {});

// Window centers whose clipped 11x11 support contains no excluded pixel.
// excluded(x,y)=true removes every window overlapping that pixel.
std::vector<uint8_t> window_mask_from_excluded(const MaskImage& excluded, int radius = 5);

} // namespace splat
