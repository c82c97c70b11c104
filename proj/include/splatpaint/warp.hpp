#pragma once

#include <optional>
#include <vector>

#include "splatpaint/camera.hpp"
#include "splatpaint/image.hpp"

namespace splat {

struct ReprojectedPixel {
    Vec2 pixel = Vec2::Zero(); // continuous coordinates in the target view
    double depth = 0.0;        // target view-space z
};

// Unproject (u,v,depth) in cam_src, transform rigidly, project into cam_dst.
// nullopt when the point lands behind the target camera.
std::optional<ReprojectedPixel> reproject_pixel(const Vec2& pixel, double depth,
                                                const CameraView& cam_src, const CameraView& cam_dst);

struct WarpResult {
    ImageBuffer warped;       // I_src->dst; sentinel 0 outside coverage
    DepthMap warped_depth;    // target view-space depth of the winning sample
    MaskImage coverage;       // pixel received a direct or interpolated sample
    MaskImage interpolated;   // filled by hole interpolation (subset of coverage)
};

struct ForwardWarpParams {
    int fill_radius = 8;          // max ray length for hole filling, px
    bool fill_holes = true;
    const MaskImage* src_select = nullptr; // when set, warp only these source pixels
};

// Splat every valid source pixel to its rounded target location; many-to-one
// collisions keep the sample nearest the target camera (Z-buffer). Uncovered
// pixels surrounded by coverage are filled by inverse-distance blending of
// the nearest covered samples along 8 rays and flagged interpolated.
WarpResult forward_warp(const ImageBuffer& src, const DepthMap& src_depth, const CameraView& cam_src,
                        const CameraView& cam_dst, const ForwardWarpParams& params = {});

struct PatchRect; // confidence.hpp

// Geometrically consistent pixel set: both maps live on the same grid; a
// pixel of patch ∩ mask belongs to the set iff both depths are valid and
// their gap is at most tau.
struct ConsistencySet {
    MaskImage members;     // P'
    double tau = 0.0;
    size_t candidate_count = 0; // |patch ∩ mask ∩ both-valid|
    size_t member_count = 0;

    double fraction() const { return candidate_count ? double(member_count) / candidate_count : 0.0; }
};

ConsistencySet consistency_set(const DepthMap& ref_depth, const DepthMap& reprojected_depth,
                               const PatchRect& patch, const MaskImage& mask, double tau);

struct PoissonOptions {
    double tolerance = 1e-7; // on the max-norm residual of the discrete system
    int extra_iterations = 1000;
};

// Seamless cloning: inside `region`, solve lap(u) = lap(source) per channel
// with u = target on the region's outer boundary; outside, u = target.
// Region must keep a 1-pixel margin from the image border. Conjugate
// gradients with Jacobi scaling, iteration cap 10*sqrt(|region|) + 1000.
ImageBuffer poisson_blend(const ImageBuffer& target, const ImageBuffer& source, const MaskImage& region,
                          const PoissonOptions& opt = {});

} // namespace splat
