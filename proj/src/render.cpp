#include "splatpaint/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>
#include <vector>

#include "splatpaint/depth_ops.hpp"

namespace splat {
namespace {

// Projection products cached for compositing and the backward pass.
struct PreparedSplat {
    Vec2 mu;
    double k00, k01, k11; // conic = inverse 2D covariance
    double opacity;
    Vec3 color;
    double depth;
    int source; // index into the input Gaussian list
    int x0, x1, y0, y1; // inclusive footprint bounds, already clamped
};

// Screen-space gradient slots accumulated per splat in phase 1 of backward.
struct ScreenGrad {
    double mu[2] = {0, 0};
    double conic[3] = {0, 0, 0}; // k00, k01 (one of the two equal entries), k11
    double opacity = 0;
    double color[3] = {0, 0, 0};
    double depth = 0;
};

struct Projection {
    std::vector<PreparedSplat> splats; // sorted front to back
};

bool param_less(const Gaussian3D& a, const Gaussian3D& b) {
    for (int i = 0; i < 3; ++i)
        if (a.position[i] != b.position[i]) return a.position[i] < b.position[i];
    for (int i = 0; i < 4; ++i)
        if (a.rotation[i] != b.rotation[i]) return a.rotation[i] < b.rotation[i];
    for (int i = 0; i < 3; ++i)
        if (a.log_scale[i] != b.log_scale[i]) return a.log_scale[i] < b.log_scale[i];
    if (a.opacity_logit != b.opacity_logit) return a.opacity_logit < b.opacity_logit;
    for (int i = 0; i < 3; ++i)
        if (a.color[i] != b.color[i]) return a.color[i] < b.color[i];
    return false;
}

Mat23 projection_jacobian(const Vec3& t, double fx, double fy) {
    const double iz = 1.0 / t.z();
    const double iz2 = iz * iz;
    Mat23 j;
    j << fx * iz, 0.0, -fx * t.x() * iz2,
         0.0, fy * iz, -fy * t.y() * iz2;
    return j;
}

std::optional<Projected2D> project_impl(const Gaussian3D& g, const CameraView& cam,
                                        const RenderSettings& s) {
    const Vec3 t = cam.world_to_cam(g.position);
    if (t.z() <= s.near_plane) return std::nullopt;

    Projected2D out;
    out.view_depth = t.z();
    out.mean2d = cam.project(t);

    const Mat3 rot = g.rotation_matrix();
    const Vec3 scale = g.scale();
    const Mat3 m = rot * scale.asDiagonal();
    const Mat3 sigma = m * m.transpose();
    const Mat23 jw = projection_jacobian(t, cam.fx, cam.fy) * cam.rotation;
    Mat2 cov = jw * sigma * jw.transpose();
    cov(0, 0) += s.cov_regularization;
    cov(1, 1) += s.cov_regularization;
    out.cov2d = cov;

    if (!s.exact_gradients) {
        const double tr = cov(0, 0) + cov(1, 1);
        const double gap = std::sqrt(std::max(0.0, (cov(0, 0) - cov(1, 1)) * (cov(0, 0) - cov(1, 1)) +
                                                       4.0 * cov(0, 1) * cov(0, 1)));
        const double lambda_max = 0.5 * (tr + gap);
        const double radius = s.footprint_sigma * std::sqrt(lambda_max);
        if (out.mean2d.x() + radius < 0.0 || out.mean2d.x() - radius > cam.width - 1 ||
            out.mean2d.y() + radius < 0.0 || out.mean2d.y() - radius > cam.height - 1)
            return std::nullopt;
    }
    return out;
}

Projection prepare(const std::vector<Gaussian3D>& gaussians, const CameraView& cam,
                   const RenderSettings& s) {
    Projection pr;
    pr.splats.reserve(gaussians.size());
    for (size_t i = 0; i < gaussians.size(); ++i) {
        const auto p = project_impl(gaussians[i], cam, s);
        if (!p) continue;
        PreparedSplat sp;
        sp.mu = p->mean2d;
        const Mat2& c = p->cov2d;
        const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(0, 1);
        sp.k00 = c(1, 1) / det;
        sp.k01 = -c(0, 1) / det;
        sp.k11 = c(0, 0) / det;
        sp.opacity = gaussians[i].opacity();
        sp.color = gaussians[i].color;
        sp.depth = p->view_depth;
        sp.source = int(i);
        if (s.exact_gradients) {
            sp.x0 = 0;
            sp.x1 = cam.width - 1;
            sp.y0 = 0;
            sp.y1 = cam.height - 1;
        } else {
            const double tr = c(0, 0) + c(1, 1);
            const double gap = std::sqrt(std::max(0.0, (c(0, 0) - c(1, 1)) * (c(0, 0) - c(1, 1)) +
                                                           4.0 * c(0, 1) * c(0, 1)));
            const double radius = s.footprint_sigma * std::sqrt(0.5 * (tr + gap));
            sp.x0 = std::max(0, int(std::floor(sp.mu.x() - radius)));
            sp.x1 = std::min(cam.width - 1, int(std::ceil(sp.mu.x() + radius)));
            sp.y0 = std::max(0, int(std::floor(sp.mu.y() - radius)));
            sp.y1 = std::min(cam.height - 1, int(std::ceil(sp.mu.y() + radius)));
            if (sp.x0 > sp.x1 || sp.y0 > sp.y1) continue;
        }
        pr.splats.push_back(sp);
    }
    // Front-to-back order. Ties are broken on the full parameter tuple so the
    // composited result is invariant under input permutation.
    std::sort(pr.splats.begin(), pr.splats.end(),
              [&gaussians](const PreparedSplat& a, const PreparedSplat& b) {
                  if (a.depth != b.depth) return a.depth < b.depth;
                  return param_less(gaussians[a.source], gaussians[b.source]);
              });
    return pr;
}

struct Contribution {
    int splat; // index into Projection::splats
    double alpha;
};

// Composites one pixel over the given splat subset (depth-ordered indices).
// When `contribs` is non-null every accepted contribution is recorded for the
// backward pass.
inline void composite_pixel(const Projection& pr, const std::vector<int>& order, double px, double py,
                            const RenderSettings& s, Vec3& color, double& depth, double& alpha,
                            std::vector<Contribution>* contribs = nullptr) {
    const double maha_cut = s.footprint_sigma * s.footprint_sigma;
    double T = 1.0;
    Vec3 c_acc = Vec3::Zero();
    double d_acc = 0.0;
    double a_acc = 0.0;
    for (int idx : order) {
        const PreparedSplat& sp = pr.splats[size_t(idx)];
        if (!s.exact_gradients) {
            if (px < sp.x0 || px > sp.x1 || py < sp.y0 || py > sp.y1) continue;
        }
        const double dx = px - sp.mu.x();
        const double dy = py - sp.mu.y();
        const double m = sp.k00 * dx * dx + 2.0 * sp.k01 * dx * dy + sp.k11 * dy * dy;
        if (!s.exact_gradients && m > maha_cut) continue;
        double a = sp.opacity * std::exp(-0.5 * m);
        if (!s.exact_gradients && a < s.alpha_min) continue;
        a = std::min(a, s.alpha_max);
        const double w = a * T;
        c_acc += sp.color * w;
        d_acc += sp.depth * w;
        a_acc += w;
        if (contribs) contribs->push_back({idx, a});
        T *= 1.0 - a;
        if (!s.exact_gradients && T < s.transmittance_min) break;
    }
    color = c_acc + s.background * T;
    depth = d_acc;
    alpha = a_acc;
}

void finalize_output(RenderOutput& out, const CameraView& cam, const RenderSettings& s) {
    // Depth validity and optional normalization, then derived normals.
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const double a = out.alpha.at(x, y);
            if (a >= s.depth_alpha_floor) {
                double d = out.depth.at(x, y);
                if (s.normalize_depth) d /= a;
                if (d > 0.0)
                    out.depth.set(x, y, d);
                else
                    out.depth.invalidate(x, y);
            } else {
                out.depth.invalidate(x, y);
            }
        }
    }
    out.normal = normal_from_depth(out.depth, cam);
}

std::vector<std::vector<int>> build_tile_lists(const Projection& pr, int tiles_x, int tiles_y,
                                               int tile) {
    std::vector<std::vector<int>> lists(size_t(tiles_x) * tiles_y);
    for (size_t i = 0; i < pr.splats.size(); ++i) {
        const PreparedSplat& sp = pr.splats[i];
        const int tx0 = sp.x0 / tile, tx1 = sp.x1 / tile;
        const int ty0 = sp.y0 / tile, ty1 = sp.y1 / tile;
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx) lists[size_t(ty) * tiles_x + tx].push_back(int(i));
    }
    return lists;
}

} // namespace

std::optional<Projected2D> project_gaussian(const Gaussian3D& g, const CameraView& cam,
                                            const RenderSettings& s) {
    auto p = project_impl(g, cam, s);
    if (p) p->source_index = 0;
    return p;
}

RenderOutput render(const std::vector<Gaussian3D>& gaussians, const CameraView& cam,
                    const RenderSettings& s) {
    const Projection pr = prepare(gaussians, cam, s);
    RenderOutput out;
    out.color = ImageBuffer(cam.width, cam.height);
    out.depth = DepthMap(cam.width, cam.height);
    out.alpha = Plane(cam.width, cam.height);

    const int tile = s.tile_size;
    const int tiles_x = (cam.width + tile - 1) / tile;
    const int tiles_y = (cam.height + tile - 1) / tile;
    const auto lists = build_tile_lists(pr, tiles_x, tiles_y, tile);

#pragma omp parallel for schedule(static)
    for (int t = 0; t < tiles_x * tiles_y; ++t) {
        const int tx = t % tiles_x, ty = t / tiles_x;
        const std::vector<int>& order = lists[size_t(t)];
        const int x_end = std::min(cam.width, (tx + 1) * tile);
        const int y_end = std::min(cam.height, (ty + 1) * tile);
        for (int y = ty * tile; y < y_end; ++y) {
            for (int x = tx * tile; x < x_end; ++x) {
                Vec3 c;
                double d, a;
                composite_pixel(pr, order, double(x), double(y), s, c, d, a);
                out.color.set_rgb(x, y, c);
                out.depth.values[size_t(y) * cam.width + x] = d;
                out.alpha.at(x, y) = a;
            }
        }
    }
    finalize_output(out, cam, s);
    return out;
}

RenderOutput render_reference(const std::vector<Gaussian3D>& gaussians, const CameraView& cam,
                              const RenderSettings& s) {
    const Projection pr = prepare(gaussians, cam, s);
    std::vector<int> order(pr.splats.size());
    std::iota(order.begin(), order.end(), 0);

    RenderOutput out;
    out.color = ImageBuffer(cam.width, cam.height);
    out.depth = DepthMap(cam.width, cam.height);
    out.alpha = Plane(cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            Vec3 c;
            double d, a;
            composite_pixel(pr, order, double(x), double(y), s, c, d, a);
            out.color.set_rgb(x, y, c);
            out.depth.values[size_t(y) * cam.width + x] = d;
            out.alpha.at(x, y) = a;
        }
    }
    finalize_output(out, cam, s);
    return out;
}

std::vector<GaussianGrad> render_with_gradients(const std::vector<Gaussian3D>& gaussians,
                                                const CameraView& cam, const PixelGrads& grads,
                                                const RenderSettings& s) {
    require_same_dims(grads.width, grads.height, cam.width, cam.height, "pixel gradients");
    const Projection pr = prepare(gaussians, cam, s);

    const int tile = s.tile_size;
    const int tiles_x = (cam.width + tile - 1) / tile;
    const int tiles_y = (cam.height + tile - 1) / tile;
    const auto lists = build_tile_lists(pr, tiles_x, tiles_y, tile);

    // Phase 1: per-tile screen-space gradient accumulation. Each tile owns a
    // local buffer indexed like its splat list; the serial reduction below
    // walks tiles in index order, so results do not depend on thread count.
    std::vector<std::vector<ScreenGrad>> tile_grads(lists.size());

#pragma omp parallel for schedule(static)
    for (int t = 0; t < tiles_x * tiles_y; ++t) {
        const std::vector<int>& order = lists[size_t(t)];
        if (order.empty()) continue;
        std::vector<ScreenGrad>& local = tile_grads[size_t(t)];
        local.resize(order.size());
        std::vector<int> rank(pr.splats.size(), -1); // splat index -> local slot
        for (size_t j = 0; j < order.size(); ++j) rank[size_t(order[j])] = int(j);

        const int tx = t % tiles_x, ty = t / tiles_x;
        const int x_end = std::min(cam.width, (tx + 1) * tile);
        const int y_end = std::min(cam.height, (ty + 1) * tile);
        std::vector<Contribution> contribs;
        contribs.reserve(order.size());

        for (int y = ty * tile; y < y_end; ++y) {
            for (int x = tx * tile; x < x_end; ++x) {
                contribs.clear();
                Vec3 cpx;
                double dpx, apx;
                composite_pixel(pr, order, double(x), double(y), s, cpx, dpx, apx, &contribs);
                if (contribs.empty()) continue;

                const size_t pix = size_t(y) * cam.width + x;
                const Vec3 gC(grads.d_color[pix * 3], grads.d_color[pix * 3 + 1],
                              grads.d_color[pix * 3 + 2]);
                const double gD = grads.d_depth[pix];
                if (gC.isZero(0.0) && gD == 0.0) continue;

                // Transmittance in front of each contribution, reconstructed
                // back to front.
                double T_cur = 1.0;
                for (const Contribution& cb : contribs) T_cur *= 1.0 - cb.alpha;
                // gC also feeds the background term through the final
                // transmittance: C += bg * prod(1-a).
                const double g_bg = s.background.dot(gC);

                Vec3 suffix_c = Vec3::Zero();
                double suffix_d = 0.0;
                double suffix_bg = g_bg * T_cur; // d(bg*T_final)/dT_final * T_final
                for (size_t k = contribs.size(); k-- > 0;) {
                    const Contribution& cb = contribs[k];
                    const PreparedSplat& sp = pr.splats[size_t(cb.splat)];
                    const double a = cb.alpha;
                    const double one_minus = 1.0 - a;
                    T_cur /= one_minus; // transmittance before this splat
                    const double w = a * T_cur;

                    ScreenGrad& sg = local[size_t(rank[size_t(cb.splat)])];
                    sg.color[0] += w * gC[0];
                    sg.color[1] += w * gC[1];
                    sg.color[2] += w * gC[2];
                    sg.depth += w * gD;

                    double d_alpha = T_cur * (sp.color.dot(gC) + sp.depth * gD);
                    d_alpha -= (suffix_c.dot(gC) + suffix_d * gD + suffix_bg) / one_minus;

                    suffix_c += sp.color * w;
                    suffix_d += sp.depth * w;

                    // Through the alpha_max clamp the gradient is zero.
                    if (a < s.alpha_max) {
                        const double dx = double(x) - sp.mu.x();
                        const double dy = double(y) - sp.mu.y();
                        const double g_over_o = a / sp.opacity; // exp(-m/2)
                        sg.opacity += g_over_o * d_alpha;
                        const double d_m = -0.5 * a * d_alpha;
                        const double dm_ddx = 2.0 * (sp.k00 * dx + sp.k01 * dy);
                        const double dm_ddy = 2.0 * (sp.k01 * dx + sp.k11 * dy);
                        sg.mu[0] -= d_m * dm_ddx;
                        sg.mu[1] -= d_m * dm_ddy;
                        sg.conic[0] += d_m * dx * dx;
                        sg.conic[1] += d_m * dx * dy;
                        sg.conic[2] += d_m * dy * dy;
                    }
                }
            }
        }
    }

    // Fixed-order reduction into per-splat totals.
    std::vector<ScreenGrad> screen(pr.splats.size());
    for (size_t t = 0; t < lists.size(); ++t) {
        const std::vector<int>& order = lists[t];
        const std::vector<ScreenGrad>& local = tile_grads[t];
        for (size_t j = 0; j < local.size(); ++j) {
            ScreenGrad& dst = screen[size_t(order[j])];
            const ScreenGrad& src = local[j];
            dst.mu[0] += src.mu[0];
            dst.mu[1] += src.mu[1];
            dst.conic[0] += src.conic[0];
            dst.conic[1] += src.conic[1];
            dst.conic[2] += src.conic[2];
            dst.opacity += src.opacity;
            dst.color[0] += src.color[0];
            dst.color[1] += src.color[1];
            dst.color[2] += src.color[2];
            dst.depth += src.depth;
        }
    }

    // Phase 2: chain screen-space gradients to the Gaussian parameters.
    std::vector<GaussianGrad> out(gaussians.size());

#pragma omp parallel for schedule(static)
    for (long long i = 0; i < (long long)pr.splats.size(); ++i) {
        const PreparedSplat& sp = pr.splats[size_t(i)];
        const ScreenGrad& sg = screen[size_t(i)];
        const Gaussian3D& g = gaussians[size_t(sp.source)];
        GaussianGrad& gg = out[size_t(sp.source)];

        gg.color = Vec3(sg.color[0], sg.color[1], sg.color[2]);
        const double o = sp.opacity;
        gg.opacity_logit = sg.opacity * o * (1.0 - o);

        // Recompute forward projection products.
        const Vec3 t = cam.world_to_cam(g.position);
        const Vec4 q = g.rotation / g.rotation.norm();
        const Mat3 rot = g.rotation_matrix();
        const Vec3 scale = g.scale();
        const Mat3 m3 = rot * scale.asDiagonal();
        const Mat3 sigma = m3 * m3.transpose();
        const Mat23 j = projection_jacobian(t, cam.fx, cam.fy);
        const Mat23 jw = j * cam.rotation;

        // conic -> 2D covariance: dSigma' = -K * G * K.
        Mat2 g_conic;
        g_conic << sg.conic[0], sg.conic[1], sg.conic[1], sg.conic[2];
        Mat2 conic;
        conic << sp.k00, sp.k01, sp.k01, sp.k11;
        const Mat2 g_cov = -conic * g_conic * conic;

        // Sigma' = (JW) Sigma (JW)^T + reg.
        const Mat23 g_jw = 2.0 * g_cov * jw * sigma;
        const Mat3 g_sigma = jw.transpose() * g_cov * jw;
        const Mat23 g_j = g_jw * cam.rotation.transpose();

        // Sigma = M M^T, M = R diag(s).
        const Mat3 g_m = 2.0 * g_sigma * m3;
        const Mat3 g_rot = g_m * scale.asDiagonal();
        Vec3 g_scale;
        for (int k = 0; k < 3; ++k) g_scale[k] = rot.col(k).dot(g_m.col(k));
        gg.log_scale = g_scale.cwiseProduct(scale);

        // Rotation matrix -> normalized quaternion.
        const double qw = q[0], qx = q[1], qy = q[2], qz = q[3];
        Vec4 g_qn = Vec4::Zero();
        {
            Mat3 d;
            d << 0, -2 * qz, 2 * qy, 2 * qz, 0, -2 * qx, -2 * qy, 2 * qx, 0;
            g_qn[0] = (g_rot.array() * d.array()).sum();
            d << 0, 2 * qy, 2 * qz, 2 * qy, -4 * qx, -2 * qw, 2 * qz, 2 * qw, -4 * qx;
            g_qn[1] = (g_rot.array() * d.array()).sum();
            d << -4 * qy, 2 * qx, 2 * qw, 2 * qx, 0, 2 * qz, -2 * qw, 2 * qz, -4 * qy;
            g_qn[2] = (g_rot.array() * d.array()).sum();
            d << -4 * qz, -2 * qw, 2 * qx, 2 * qw, -4 * qz, 2 * qy, 2 * qx, 2 * qy, 0;
            g_qn[3] = (g_rot.array() * d.array()).sum();
        }
        const double qnorm = g.rotation.norm();
        gg.rotation = (g_qn - q * q.dot(g_qn)) / qnorm;

        // Camera-space position gradient from J, mean2d and view depth.
        Vec3 g_t = Vec3::Zero();
        const double iz = 1.0 / t.z();
        const double iz2 = iz * iz;
        g_t.x() += g_j(0, 2) * (-cam.fx * iz2);
        g_t.y() += g_j(1, 2) * (-cam.fy * iz2);
        g_t.z() += g_j(0, 0) * (-cam.fx * iz2) + g_j(1, 1) * (-cam.fy * iz2) +
                   g_j(0, 2) * (2.0 * cam.fx * t.x() * iz2 * iz) +
                   g_j(1, 2) * (2.0 * cam.fy * t.y() * iz2 * iz);
        g_t.x() += sg.mu[0] * cam.fx * iz;
        g_t.y() += sg.mu[1] * cam.fy * iz;
        g_t.z() += -sg.mu[0] * cam.fx * t.x() * iz2 - sg.mu[1] * cam.fy * t.y() * iz2;
        g_t.z() += sg.depth;

        gg.position = cam.rotation.transpose() * g_t;
    }
    return out;
}

} // namespace splat
