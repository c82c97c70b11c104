#include "splatpaint/confidence.hpp"

#include <algorithm>
#include <cmath>

#include "splatpaint/ssim.hpp"
#include "splatpaint/warp.hpp"

namespace splat {

PatchRect extract_patch(const MaskImage& mask, double margin_frac) {
    int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
        }
    }
    if (x1 < 0) throw ValidationError("extract_patch: empty mask");
    const int bw = x1 - x0 + 1, bh = y1 - y0 + 1;
    const int mx = int(std::lround(margin_frac * bw));
    const int my = int(std::lround(margin_frac * bh));
    PatchRect r;
    r.x = std::max(0, x0 - mx);
    r.y = std::max(0, y0 - my);
    r.width = std::min(mask.width, x1 + 1 + mx) - r.x;
    r.height = std::min(mask.height, y1 + 1 + my) - r.y;
    return r;
}

ImageBuffer crop(const ImageBuffer& img, const PatchRect& r) {
    ImageBuffer out(r.width, r.height);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x)
            out.set_rgb(x, y, img.rgb(r.x + x, r.y + y));
    return out;
}

namespace {

constexpr int kScales = 3;
constexpr int kMinSize = 16;

Plane downsample2(const Plane& in) {
    Plane out(in.width / 2, in.height / 2);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.at(x, y) = 0.25 * (in.at(2 * x, 2 * y) + in.at(2 * x + 1, 2 * y) +
                                   in.at(2 * x, 2 * y + 1) + in.at(2 * x + 1, 2 * y + 1));
    return out;
}

// Adjoint of downsample2: spreads each coarse gradient over its 2x2 block.
Plane upsample2_adjoint(const Plane& g, int fine_w, int fine_h) {
    Plane out(fine_w, fine_h);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            const double v = 0.25 * g.at(x, y);
            out.at(2 * x, 2 * y) += v;
            out.at(2 * x + 1, 2 * y) += v;
            out.at(2 * x, 2 * y + 1) += v;
            out.at(2 * x + 1, 2 * y + 1) += v;
        }
    return out;
}

void check_perceptual_dims(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_dims(a.width, a.height, b.width, b.height, "perceptual_distance");
    if (a.width < kMinSize || a.height < kMinSize)
        throw ValidationError("perceptual_distance: patch too small for the coarsest scale (" +
                              std::to_string(a.width) + "x" + std::to_string(a.height) + ", need " +
                              std::to_string(kMinSize) + ")");
}

} // namespace

double perceptual_distance(const ImageBuffer& a, const ImageBuffer& b) {
    check_perceptual_dims(a, b);
    Plane la = a.luminance(), lb = b.luminance();
    double total = 0.0;
    for (int s = 0; s < kScales; ++s) {
        if (s > 0) {
            la = downsample2(la);
            lb = downsample2(lb);
        }
        total += (1.0 - ssim_plane(la, lb).mean) * 0.5;
    }
    return total / kScales;
}

double perceptual_distance_grad(const ImageBuffer& a, const ImageBuffer& b, double upstream,
                                std::vector<double>& grad_a) {
    check_perceptual_dims(a, b);
    std::vector<Plane> las(1, a.luminance()), lbs(1, b.luminance());
    for (int s = 1; s < kScales; ++s) {
        las.push_back(downsample2(las.back()));
        lbs.push_back(downsample2(lbs.back()));
    }

    double total = 0.0;
    Plane grad_lum(a.width, a.height);
    for (int s = 0; s < kScales; ++s) {
        Plane g;
        const SsimResult r = ssim_plane_grad(las[size_t(s)], lbs[size_t(s)], nullptr, g);
        total += (1.0 - r.mean) * 0.5;
        // d(total_mean)/d(ssim_mean_s) = -1/(2*kScales)
        const double scale = -0.5 / kScales;
        for (double& v : g.values) v *= scale;
        for (int up = s; up > 0; --up)
            g = upsample2_adjoint(g, las[size_t(up - 1)].width, las[size_t(up - 1)].height);
        for (size_t i = 0; i < grad_lum.size(); ++i) grad_lum.values[i] += g.values[i];
    }

    static const double kRgb[3] = {0.299, 0.587, 0.114};
    for (size_t i = 0; i < grad_lum.size(); ++i)
        for (int c = 0; c < 3; ++c) grad_a[i * 3 + c] += upstream * kRgb[c] * grad_lum.values[i];
    return total / kScales;
}

double inpaint_weight(double conf, const ConfidenceParams& p) {
    return logistic(p.sigmoid_alpha * (conf - p.sigmoid_beta));
}

namespace {

// Grow the rect to the metric's minimum size, keeping it inside the image.
PatchRect ensure_min_size(PatchRect r, int img_w, int img_h, int min_size) {
    if (img_w < min_size || img_h < min_size)
        throw ValidationError("evaluate_confidence: image smaller than the perceptual minimum");
    if (r.width < min_size) {
        r.x = std::clamp(r.x - (min_size - r.width) / 2, 0, img_w - min_size);
        r.width = min_size;
    }
    if (r.height < min_size) {
        r.y = std::clamp(r.y - (min_size - r.height) / 2, 0, img_h - min_size);
        r.height = min_size;
    }
    return r;
}

} // namespace

ConfidenceRecord evaluate_confidence(const ViewRecord& target, int target_id, const ViewRecord& reference,
                                     int reference_id, const DepthMap& reference_depth,
                                     const ConfidenceParams& params, int iteration) {
    ConfidenceRecord rec;
    rec.view_id = target_id;
    rec.last_update_iteration = iteration;
    if (target_id == reference_id) {
        rec.conf = 1.0;
        rec.weight = inpaint_weight(1.0, params);
        return rec;
    }

    PatchRect patch = extract_patch(target.mask, params.patch_margin_frac);
    patch = ensure_min_size(patch, target.image.width, target.image.height, kMinSize);

    const WarpResult wr =
        forward_warp(reference.image, reference_depth, reference.cam, target.cam, {});

    // Coverage over the patch; uncovered pixels are substituted with the
    // target's own pixels so they compare as neutral.
    size_t covered = 0, patch_pixels = 0;
    int cx0 = patch.x_end(), cy0 = patch.y_end(), cx1 = patch.x - 1, cy1 = patch.y - 1;
    ImageBuffer warped = target.image;
    for (int y = patch.y; y < patch.y_end(); ++y) {
        for (int x = patch.x; x < patch.x_end(); ++x) {
            ++patch_pixels;
            bool ok = wr.coverage.at(x, y);
            if (ok && !params.include_interpolated && wr.interpolated.at(x, y)) ok = false;
            if (!ok) continue;
            ++covered;
            warped.set_rgb(x, y, wr.warped.rgb(x, y));
            cx0 = std::min(cx0, x);
            cy0 = std::min(cy0, y);
            cx1 = std::max(cx1, x);
            cy1 = std::max(cy1, y);
        }
    }

    PatchRect eval = patch;
    if (covered < size_t(params.min_coverage * double(patch_pixels))) {
        rec.low_coverage = true;
        if (covered > 0) {
            eval = PatchRect{cx0, cy0, cx1 - cx0 + 1, cy1 - cy0 + 1};
            eval = ensure_min_size(eval, target.image.width, target.image.height, kMinSize);
        }
    }
    if (covered == 0) {
        rec.conf = 0.0;
        rec.weight = inpaint_weight(0.0, params);
        return rec;
    }

    const ImageBuffer warped_bf =
        bilateral_filter(warped, target.depth_mono, target.normal_mono, params.bilateral);
    const ImageBuffer target_bf =
        bilateral_filter(target.image, target.depth_mono, target.normal_mono, params.bilateral);

    const double dist = perceptual_distance(crop(warped_bf, eval), crop(target_bf, eval));
    rec.conf = std::clamp(1.0 - dist, 0.0, 1.0);
    rec.weight = inpaint_weight(rec.conf, params);
    return rec;
}

std::vector<ConfidenceRecord> evaluate_all_confidences(const SceneDataset& ds,
                                                       const DepthMap& reference_depth,
                                                       const ConfidenceParams& params, int iteration) {
    std::vector<ConfidenceRecord> records(ds.views.size());
#pragma omp parallel for schedule(static)
    for (long long k = 0; k < (long long)ds.views.size(); ++k) {
        records[size_t(k)] =
            evaluate_confidence(ds.views[size_t(k)], int(k), ds.reference(), ds.reference_view_id,
                                reference_depth, params, iteration);
    }
    return records;
}

} // namespace splat
