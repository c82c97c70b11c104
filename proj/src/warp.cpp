#include "splatpaint/warp.hpp"

#include <algorithm>
#include <cmath>

#include "splatpaint/confidence.hpp"

namespace splat {

std::optional<ReprojectedPixel> reproject_pixel(const Vec2& pixel, double depth,
                                                const CameraView& cam_src, const CameraView& cam_dst) {
    const Vec3 p_src = depth * cam_src.pixel_ray(pixel.x(), pixel.y());
    const Vec3 p_world = cam_src.cam_to_world(p_src);
    const Vec3 p_dst = cam_dst.world_to_cam(p_world);
    if (p_dst.z() <= 0.0) return std::nullopt;
    return ReprojectedPixel{cam_dst.project(p_dst), p_dst.z()};
}

namespace {

// Hole filling gathers the nearest covered sample along 8 rays; a pixel is
// filled only when the hit directions wrap around it (some pair at least
// 135 degrees apart), approximating "inside the convex hull of coverage".
constexpr int kRayDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kRayDy[8] = {0, 1, 1, 1, 0, -1, -1, -1};

bool directions_surround(const bool hit[8]) {
    for (int i = 0; i < 8; ++i) {
        if (!hit[i]) continue;
        for (int j = i + 3; j <= i + 5; ++j)
            if (hit[j % 8]) return true;
    }
    return false;
}

void fill_holes(WarpResult& wr, int fill_radius) {
    const int w = wr.warped.width, h = wr.warped.height;
    const MaskImage direct = wr.coverage; // snapshot: interpolate from direct hits only

    std::vector<std::pair<int, int>> to_fill;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (!direct.at(x, y)) to_fill.push_back({x, y});

    for (auto [x, y] : to_fill) {
        bool hit[8] = {};
        double dist[8];
        Vec3 color[8];
        double depth[8];
        for (int r = 0; r < 8; ++r) {
            for (int step = 1; step <= fill_radius; ++step) {
                const int xx = x + kRayDx[r] * step;
                const int yy = y + kRayDy[r] * step;
                if (xx < 0 || xx >= w || yy < 0 || yy >= h) break;
                if (direct.at(xx, yy)) {
                    hit[r] = true;
                    dist[r] = std::hypot(double(kRayDx[r] * step), double(kRayDy[r] * step));
                    color[r] = wr.warped.rgb(xx, yy);
                    depth[r] = wr.warped_depth.at(xx, yy);
                    break;
                }
            }
        }
        if (!directions_surround(hit)) continue;
        Vec3 c_acc = Vec3::Zero();
        double d_acc = 0.0, wsum = 0.0;
        for (int r = 0; r < 8; ++r) {
            if (!hit[r]) continue;
            const double wgt = 1.0 / dist[r];
            c_acc += wgt * color[r];
            d_acc += wgt * depth[r];
            wsum += wgt;
        }
        wr.warped.set_rgb(x, y, c_acc / wsum);
        wr.warped_depth.set(x, y, d_acc / wsum);
        wr.coverage.set(x, y, true);
        wr.interpolated.set(x, y, true);
    }
}

} // namespace

WarpResult forward_warp(const ImageBuffer& src, const DepthMap& src_depth, const CameraView& cam_src,
                        const CameraView& cam_dst, const ForwardWarpParams& params) {
    require_same_dims(src.width, src.height, src_depth.width, src_depth.height, "forward_warp");

    const int sw = src.width, sh = src.height;
    const int dw = cam_dst.width, dh = cam_dst.height;

    // Reprojection is pure and parallel; the Z-buffer scatter below is serial
    // in row-major source order (deterministic min-keep).
    struct Hit {
        int dst = -1; // linear target pixel or -1
        double depth = 0.0;
    };
    std::vector<Hit> hits(size_t(sw) * sh);

#pragma omp parallel for schedule(static)
    for (int y = 0; y < sh; ++y) {
        for (int x = 0; x < sw; ++x) {
            const size_t i = size_t(y) * sw + x;
            if (!src_depth.valid(x, y)) continue;
            if (params.src_select && !params.src_select->at(x, y)) continue;
            const auto rp = reproject_pixel(Vec2(x, y), src_depth.at(x, y), cam_src, cam_dst);
            if (!rp) continue;
            const int tx = int(std::lround(rp->pixel.x()));
            const int ty = int(std::lround(rp->pixel.y()));
            if (tx < 0 || tx >= dw || ty < 0 || ty >= dh) continue;
            hits[i].dst = ty * dw + tx;
            hits[i].depth = rp->depth;
        }
    }

    WarpResult wr;
    wr.warped = ImageBuffer(dw, dh);
    wr.warped_depth = DepthMap(dw, dh);
    wr.coverage = MaskImage(dw, dh);
    wr.interpolated = MaskImage(dw, dh);

    for (int y = 0; y < sh; ++y) {
        for (int x = 0; x < sw; ++x) {
            const Hit& hit = hits[size_t(y) * sw + x];
            if (hit.dst < 0) continue;
            const int tx = hit.dst % dw, ty = hit.dst / dw;
            if (wr.coverage.at(tx, ty) && wr.warped_depth.at(tx, ty) <= hit.depth) continue;
            wr.warped.set_rgb(tx, ty, src.rgb(x, y));
            wr.warped_depth.set(tx, ty, hit.depth);
            wr.coverage.set(tx, ty, true);
        }
    }

    if (params.fill_holes) fill_holes(wr, params.fill_radius);
    return wr;
}

ConsistencySet consistency_set(const DepthMap& ref_depth, const DepthMap& reprojected_depth,
                               const PatchRect& patch, const MaskImage& mask, double tau) {
    require_same_dims(ref_depth.width, ref_depth.height, reprojected_depth.width,
                      reprojected_depth.height, "consistency_set");
    require_same_dims(ref_depth.width, ref_depth.height, mask.width, mask.height, "consistency_set");

    ConsistencySet out;
    out.tau = tau;
    out.members = MaskImage(ref_depth.width, ref_depth.height);
    const int x1 = std::min(patch.x_end(), ref_depth.width);
    const int y1 = std::min(patch.y_end(), ref_depth.height);
    for (int y = std::max(0, patch.y); y < y1; ++y) {
        for (int x = std::max(0, patch.x); x < x1; ++x) {
            if (!mask.at(x, y)) continue;
            if (!ref_depth.valid(x, y) || !reprojected_depth.valid(x, y)) continue;
            ++out.candidate_count;
            if (std::abs(ref_depth.at(x, y) - reprojected_depth.at(x, y)) <= tau) {
                out.members.set(x, y, true);
                ++out.member_count;
            }
        }
    }
    return out;
}

namespace {

double laplacian(const ImageBuffer& img, int x, int y, int c) {
    return img.at(x - 1, y, c) + img.at(x + 1, y, c) + img.at(x, y - 1, c) + img.at(x, y + 1, c) -
           4.0 * img.at(x, y, c);
}

} // namespace

ImageBuffer poisson_blend(const ImageBuffer& target, const ImageBuffer& source, const MaskImage& region,
                          const PoissonOptions& opt) {
    require_same_dims(target.width, target.height, source.width, source.height, "poisson_blend");
    require_same_dims(target.width, target.height, region.width, region.height, "poisson_blend");

    const int w = target.width, h = target.height;
    std::vector<int> index(size_t(w) * h, -1);
    std::vector<std::pair<int, int>> pixels;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!region.at(x, y)) continue;
            if (x <= 0 || x >= w - 1 || y <= 0 || y >= h - 1)
                throw ValidationError("poisson_blend: region touches the image border");
            index[size_t(y) * w + x] = int(pixels.size());
            pixels.push_back({x, y});
        }
    }

    ImageBuffer out = target;
    const size_t n = pixels.size();
    if (n == 0) return out;

    const int max_iter = int(10.0 * std::sqrt(double(n))) + opt.extra_iterations;

    // System: (4I - adjacency) u = -lap(source) + boundary target values.
    // Constant-diagonal Jacobi scaling, conjugate gradients.
    const auto apply_a = [&](const std::vector<double>& u, std::vector<double>& au) {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < (long long)n; ++i) {
            const auto [x, y] = pixels[size_t(i)];
            double v = 4.0 * u[size_t(i)];
            const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
            for (const auto& q : nb) {
                const int j = index[size_t(q[1]) * w + q[0]];
                if (j >= 0) v -= u[size_t(j)];
            }
            au[size_t(i)] = v;
        }
    };

    for (int c = 0; c < 3; ++c) {
        std::vector<double> b(n), u(n), r(n), p(n), ap(n);
        for (size_t i = 0; i < n; ++i) {
            const auto [x, y] = pixels[i];
            double rhs = -laplacian(source, x, y, c);
            const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
            for (const auto& q : nb)
                if (index[size_t(q[1]) * w + q[0]] < 0) rhs += target.at(q[0], q[1], c);
            b[i] = rhs;
            u[i] = target.at(x, y, c); // warm start
        }

        apply_a(u, ap);
        double rz = 0.0;
        for (size_t i = 0; i < n; ++i) {
            r[i] = b[i] - ap[i];
            p[i] = r[i] / 4.0; // Jacobi-scaled residual
            rz += r[i] * p[i];
        }

        double rmax = 0.0;
        for (size_t i = 0; i < n; ++i) rmax = std::max(rmax, std::abs(r[i]));
        int iter = 0;
        while (rmax > opt.tolerance && iter < max_iter) {
            apply_a(p, ap);
            double p_ap = 0.0;
            for (size_t i = 0; i < n; ++i) p_ap += p[i] * ap[i];
            const double alpha = rz / p_ap;
            rmax = 0.0;
            double rz_new = 0.0;
            for (size_t i = 0; i < n; ++i) {
                u[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
                rz_new += r[i] * r[i] / 4.0;
                rmax = std::max(rmax, std::abs(r[i]));
            }
            const double beta = rz_new / rz;
            rz = rz_new;
            for (size_t i = 0; i < n; ++i) p[i] = r[i] / 4.0 + beta * p[i];
            ++iter;
        }
        if (rmax > opt.tolerance)
            throw ConvergenceError("poisson_blend: no convergence after " + std::to_string(iter) +
                                       " iterations, residual " + std::to_string(rmax),
                                   rmax);
        for (size_t i = 0; i < n; ++i) {
            const auto [x, y] = pixels[i];
            out.at(x, y, c) = u[i];
        }
    }
    return out;
}

} // namespace splat
