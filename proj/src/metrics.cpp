#include "splatpaint/metrics.hpp"

#include <cmath>

#include "splatpaint/ssim.hpp"

namespace splat {

double metric_ssim(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_dims(a.width, a.height, b.width, b.height, "ssim");
    if (a.width < 11 || a.height < 11)
        throw ValidationError("ssim: images must be at least 11x11");
    return ssim_rgb(a, b).mean;
}

double metric_psnr(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_dims(a.width, a.height, b.width, b.height, "psnr");
    double mse = 0.0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        mse += d * d;
    }
    mse /= double(a.pixels.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

RegionReport evaluate_inpaint_region(const ImageBuffer& render, const ImageBuffer& gt,
                                     const MaskImage& mask, double margin_frac) {
    require_same_dims(render.width, render.height, gt.width, gt.height, "evaluate_inpaint_region");
    RegionReport rep;
    rep.bbox = extract_patch(mask, margin_frac);
    const ImageBuffer a = crop(render, rep.bbox);
    const ImageBuffer b = crop(gt, rep.bbox);
    rep.ssim = ssim_rgb(a, b).mean;
    rep.psnr_db = metric_psnr(a, b);
    rep.perceptual = perceptual_distance(a, b);
    return rep;
}

} // namespace splat
