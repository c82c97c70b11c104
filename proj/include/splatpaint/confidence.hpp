#pragma once

#include <functional>
#include <vector>

#include "splatpaint/dataset.hpp"
#include "splatpaint/depth_ops.hpp"
#include "splatpaint/image.hpp"

namespace splat {

// Axis-aligned patch containing a view's whole inpaint mask.
struct PatchRect {
    int x = 0, y = 0;
    int width = 0, height = 0;

    bool contains(int px, int py) const {
        return px >= x && px < x + width && py >= y && py < y + height;
    }
    int x_end() const { return x + width; }
    int y_end() const { return y + height; }
};

// Tight bounding box of the mask expanded by margin_frac of the box dimension
// per side, clamped to image bounds. Throws ValidationError on an empty mask.
PatchRect extract_patch(const MaskImage& mask, double margin_frac);

ImageBuffer crop(const ImageBuffer& img, const PatchRect& r);

// Deterministic perceptual distance in [0,1]: mean over 3 dyadic scales of
// (1 - SSIM)/2 on luminance. Symmetric, zero iff identical, differentiable.
// Requires both images >= 16x16.
double perceptual_distance(const ImageBuffer& a, const ImageBuffer& b);

// Also accumulates upstream * d(distance)/d(a) into grad_a (width*height*3).
double perceptual_distance_grad(const ImageBuffer& a, const ImageBuffer& b, double upstream,
                                std::vector<double>& grad_a);

struct ConfidenceParams {
    double sigmoid_alpha = 10.0;  // weight = logistic(alpha * (conf - beta))
    double sigmoid_beta = 0.5;
    double patch_margin_frac = 0.25;
    double min_coverage = 0.5;    // of the patch, before the diagnostic fires
    BilateralParams bilateral;
    bool include_interpolated = true; // count hole-filled pixels as coverage
};

struct ConfidenceRecord {
    int view_id = -1;
    double conf = 0.0;
    double weight = 0.0;
    int last_update_iteration = 0;
    bool low_coverage = false; // diagnostic: patch coverage below min_coverage
};

double inpaint_weight(double conf, const ConfidenceParams& p);

// Warps the reference image into the target view with the given reference
// depth, bilateral-filters both sides, and scores 1 - perceptual distance on
// the target's mask patch. The reference view itself gets conf = 1.
ConfidenceRecord evaluate_confidence(const ViewRecord& target, int target_id, const ViewRecord& reference,
                                     int reference_id, const DepthMap& reference_depth,
                                     const ConfidenceParams& params, int iteration = 0);

// Confidence for every view of the dataset (reference included).
std::vector<ConfidenceRecord> evaluate_all_confidences(const SceneDataset& ds,
                                                       const DepthMap& reference_depth,
                                                       const ConfidenceParams& params, int iteration = 0);

} // namespace splat
