#pragma once

#include "splatpaint/camera.hpp"
#include "splatpaint/image.hpp"

namespace splat {

// Closed-form affine fit a*d + b of estimated depth to sparse metric depth.
struct AffineDepthFit {
    double scale = 1.0;
    double shift = 0.0;
    double residual_rms = 0.0;
    size_t sample_count = 0;
};

struct SparseDepthSamples; // dataset.hpp

// Least-squares (a, b) minimizing sum |a*d_mono(p) + b - d_sparse(p)|^2 over
// samples falling on valid d_mono pixels. Throws ValidationError when fewer
// than 2 usable samples exist or the regression is degenerate.
AffineDepthFit align_depth(const DepthMap& d_mono, const SparseDepthSamples& samples);

// Same fit against a dense target depth map, subsampled on a stride grid;
// pixels inside `skip` (when given) are excluded. Used by the periodic
// confidence refresh to re-align estimated depth to rendered depth.
AffineDepthFit align_depth_dense(const DepthMap& d_mono, const DepthMap& target, int stride,
                                 const MaskImage* skip = nullptr);

// a*d + b per valid pixel; results driven non-positive become invalid.
DepthMap apply_affine(const DepthMap& d, const AffineDepthFit& fit);

// Camera-space normals from central differences of unprojected depth,
// oriented toward the camera (negative z). A pixel needs itself and its four
// cross neighbors valid; image-border pixels are invalid.
NormalMap normal_from_depth(const DepthMap& d, const CameraView& cam);

// Adjoint of normal_from_depth: accumulates dL/ddepth given dL/dnormal.
// grad_normal is a width*height*3 array; contributions land on the four
// cross-neighbor depth pixels of each valid normal.
void normal_from_depth_vjp(const DepthMap& d, const CameraView& cam,
                           const std::vector<double>& grad_normal, Plane& grad_depth);

struct BilateralParams {
    int radius = 7;
    double sigma_spatial = 3.0;
    double sigma_color = 0.3;          // RGB L2 distance
    double depth_sigma_fraction = 0.02; // of the view's valid depth range
    double sigma_normal = 0.2;         // on (1 - n.n')
};

// Depth/normal-guided bilateral filter. Output pixels are convex combinations
// of window inputs; guidance terms drop out where either sample is invalid.
ImageBuffer bilateral_filter(const ImageBuffer& img, const DepthMap& depth, const NormalMap& normals,
                             const BilateralParams& params = {});

} // namespace splat
