#pragma once

#include <optional>
#include <vector>

#include "splatpaint/camera.hpp"
#include "splatpaint/gaussian.hpp"
#include "splatpaint/image.hpp"

namespace splat {

// Screen-space footprint of one projected Gaussian.
struct Projected2D {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Zero(); // regularized, positive definite
    double view_depth = 0.0;   // camera-space z
    int source_index = -1;
};

struct RenderSettings {
    double near_plane = 0.01;
    int tile_size = 16;
    double footprint_sigma = 3.0;     // Mahalanobis cutoff radius
    double alpha_min = 1.0 / 255.0;   // skip contributions below this
    double alpha_max = 0.99;          // clamp, keeps transmittance positive
    double transmittance_min = 1e-4;  // stop compositing below this
    double cov_regularization = 0.3;  // px^2 added to the 2D covariance diagonal
    double depth_alpha_floor = 0.5;   // rendered depth valid above this alpha
    Vec3 background = Vec3::Zero();
    bool normalize_depth = false;     // experimental: divide depth by alpha
    // Removes the footprint/alpha/transmittance cutoffs so the forward map is
    // smooth; used by gradient-correctness checks.
    bool exact_gradients = false;
};

struct RenderOutput {
    ImageBuffer color;
    DepthMap depth;
    Plane alpha;
    NormalMap normal;
};

// Upstream pixel gradients fed into the backward pass.
struct PixelGrads {
    int width = 0;
    int height = 0;
    std::vector<double> d_color; // width*height*3, dL/dC
    std::vector<double> d_depth; // width*height, dL/dD (zero where depth unused)

    PixelGrads() = default;
    PixelGrads(int w, int h) : width(w), height(h), d_color(size_t(w) * h * 3, 0.0), d_depth(size_t(w) * h, 0.0) {}
};

// EWA projection of one Gaussian; nullopt when culled (behind the near plane
// or footprint outside the image).
std::optional<Projected2D> project_gaussian(const Gaussian3D& g, const CameraView& cam,
                                            const RenderSettings& s = {});

// Tiled, OpenMP-parallel forward render (depth-ordered alpha compositing of
// color and view-space z). Deterministic: per-pixel compositing order is the
// global depth order regardless of thread count.
RenderOutput render(const std::vector<Gaussian3D>& gaussians, const CameraView& cam,
                    const RenderSettings& s = {});

// Serial per-pixel reference without tiling; kept for tests and benchmarks.
RenderOutput render_reference(const std::vector<Gaussian3D>& gaussians, const CameraView& cam,
                              const RenderSettings& s = {});

// Reverse-mode gradients of the composited color and depth with respect to
// every Gaussian parameter. Non-contributing Gaussians get exact zeros.
// Tile contributions are reduced in fixed tile order, so results are
// byte-stable across runs and thread counts.
std::vector<GaussianGrad> render_with_gradients(const std::vector<Gaussian3D>& gaussians,
                                                const CameraView& cam, const PixelGrads& grads,
                                                const RenderSettings& s = {});

} // namespace splat
