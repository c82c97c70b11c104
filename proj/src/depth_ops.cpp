#include "splatpaint/depth_ops.hpp"

#include <algorithm>
#include <cmath>

#include "splatpaint/dataset.hpp"

namespace splat {
namespace {

struct FitAccum {
    double sum_d = 0, sum_s = 0, sum_dd = 0, sum_ds = 0;
    size_t n = 0;

    void add(double d, double s) {
        sum_d += d;
        sum_s += s;
        sum_dd += d * d;
        sum_ds += d * s;
        ++n;
    }

    AffineDepthFit solve() const {
        if (n < 2) throw ValidationError("align_depth: need at least 2 usable samples, got " +
                                         std::to_string(n));
        const double denom = double(n) * sum_dd - sum_d * sum_d;
        const double scale_ref = double(n) * sum_dd + sum_d * sum_d;
        if (std::abs(denom) <= 1e-12 * std::max(1.0, scale_ref))
            throw ValidationError("align_depth: degenerate regression (all source depths equal)");
        AffineDepthFit fit;
        fit.scale = (double(n) * sum_ds - sum_d * sum_s) / denom;
        fit.shift = (sum_s - fit.scale * sum_d) / double(n);
        fit.sample_count = n;
        return fit;
    }
};

} // namespace

AffineDepthFit align_depth(const DepthMap& d_mono, const SparseDepthSamples& samples) {
    FitAccum acc;
    for (const SparseDepthSample& s : samples.samples) {
        if (!d_mono.in_bounds(s.u, s.v) || !d_mono.valid(s.u, s.v)) continue;
        acc.add(d_mono.at(s.u, s.v), s.depth);
    }
    AffineDepthFit fit = acc.solve();
    double sq = 0.0;
    for (const SparseDepthSample& s : samples.samples) {
        if (!d_mono.in_bounds(s.u, s.v) || !d_mono.valid(s.u, s.v)) continue;
        const double r = fit.scale * d_mono.at(s.u, s.v) + fit.shift - s.depth;
        sq += r * r;
    }
    fit.residual_rms = std::sqrt(sq / double(fit.sample_count));
    return fit;
}

AffineDepthFit align_depth_dense(const DepthMap& d_mono, const DepthMap& target, int stride,
                                 const MaskImage* skip) {
    require_same_dims(d_mono.width, d_mono.height, target.width, target.height, "align_depth_dense");
    SparseDepthSamples samples;
    for (int y = 0; y < target.height; y += stride) {
        for (int x = 0; x < target.width; x += stride) {
            if (!target.valid(x, y)) continue;
            if (skip && skip->at(x, y)) continue;
            samples.samples.push_back({x, y, target.at(x, y)});
        }
    }
    return align_depth(d_mono, samples);
}

DepthMap apply_affine(const DepthMap& d, const AffineDepthFit& fit) {
    if (!std::isfinite(fit.scale) || !std::isfinite(fit.shift))
        throw ValidationError("apply_affine: non-finite fit");
    DepthMap out(d.width, d.height);
    for (int y = 0; y < d.height; ++y) {
        for (int x = 0; x < d.width; ++x) {
            if (!d.valid(x, y)) continue;
            const double v = fit.scale * d.at(x, y) + fit.shift;
            if (v > 0.0) out.set(x, y, v);
        }
    }
    return out;
}

NormalMap normal_from_depth(const DepthMap& d, const CameraView& cam) {
    NormalMap out(d.width, d.height);
#pragma omp parallel for schedule(static)
    for (int y = 1; y < d.height - 1; ++y) {
        for (int x = 1; x < d.width - 1; ++x) {
            if (!d.valid(x, y) || !d.valid(x - 1, y) || !d.valid(x + 1, y) || !d.valid(x, y - 1) ||
                !d.valid(x, y + 1))
                continue;
            const Vec3 px0 = d.at(x - 1, y) * cam.pixel_ray(x - 1, y);
            const Vec3 px1 = d.at(x + 1, y) * cam.pixel_ray(x + 1, y);
            const Vec3 py0 = d.at(x, y - 1) * cam.pixel_ray(x, y - 1);
            const Vec3 py1 = d.at(x, y + 1) * cam.pixel_ray(x, y + 1);
            const Vec3 tx = px1 - px0;
            const Vec3 ty = py1 - py0;
            Vec3 n = tx.cross(ty);
            const double len = n.norm();
            if (len < 1e-300) continue;
            n /= len;
            if (n.z() > 0.0) n = -n;
            out.set(x, y, n);
        }
    }
    return out;
}

void normal_from_depth_vjp(const DepthMap& d, const CameraView& cam,
                           const std::vector<double>& grad_normal, Plane& grad_depth) {
    // Serial scatter: each valid pixel touches its four cross neighbors.
    for (int y = 1; y < d.height - 1; ++y) {
        for (int x = 1; x < d.width - 1; ++x) {
            if (!d.valid(x, y) || !d.valid(x - 1, y) || !d.valid(x + 1, y) || !d.valid(x, y - 1) ||
                !d.valid(x, y + 1))
                continue;
            const size_t pix = size_t(y) * d.width + x;
            const Vec3 gn(grad_normal[pix * 3], grad_normal[pix * 3 + 1], grad_normal[pix * 3 + 2]);
            if (gn.isZero(0.0)) continue;

            const Vec3 rx0 = cam.pixel_ray(x - 1, y);
            const Vec3 rx1 = cam.pixel_ray(x + 1, y);
            const Vec3 ry0 = cam.pixel_ray(x, y - 1);
            const Vec3 ry1 = cam.pixel_ray(x, y + 1);
            const Vec3 tx = d.at(x + 1, y) * rx1 - d.at(x - 1, y) * rx0;
            const Vec3 ty = d.at(x, y + 1) * ry1 - d.at(x, y - 1) * ry0;
            Vec3 u = tx.cross(ty);
            const double len = u.norm();
            if (len < 1e-300) continue;
            const Vec3 uhat = u / len;
            const double sign = uhat.z() > 0.0 ? -1.0 : 1.0;

            // n = sign * u/|u|;  dL/du = sign * (I - uhat uhat^T) gn / |u|.
            const Vec3 gu = sign * (gn - uhat * uhat.dot(gn)) / len;
            // u = tx x ty.
            const Vec3 gtx = ty.cross(gu);
            const Vec3 gty = gu.cross(tx);

            grad_depth.at(x + 1, y) += rx1.dot(gtx);
            grad_depth.at(x - 1, y) -= rx0.dot(gtx);
            grad_depth.at(x, y + 1) += ry1.dot(gty);
            grad_depth.at(x, y - 1) -= ry0.dot(gty);
        }
    }
}

ImageBuffer bilateral_filter(const ImageBuffer& img, const DepthMap& depth, const NormalMap& normals,
                             const BilateralParams& p) {
    require_same_dims(img.width, img.height, depth.width, depth.height, "bilateral_filter depth");
    require_same_dims(img.width, img.height, normals.width, normals.height, "bilateral_filter normals");

    double lo = 0.0, hi = 0.0;
    const bool has_depth = depth.valid_range(lo, hi);
    const double sigma_depth = std::max(1e-12, p.depth_sigma_fraction * std::max(hi - lo, 1e-12));

    const double inv2_sp = 1.0 / (2.0 * p.sigma_spatial * p.sigma_spatial);
    const double inv2_col = 1.0 / (2.0 * p.sigma_color * p.sigma_color);
    const double inv2_dep = 1.0 / (2.0 * sigma_depth * sigma_depth);
    const double inv2_nrm = 1.0 / (2.0 * p.sigma_normal * p.sigma_normal);

    ImageBuffer out(img.width, img.height);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const Vec3 c0 = img.rgb(x, y);
            const bool d0_ok = has_depth && depth.valid(x, y);
            const double d0 = d0_ok ? depth.at(x, y) : 0.0;
            const bool n0_ok = normals.valid(x, y);
            const Vec3 n0 = n0_ok ? normals.at(x, y) : Vec3::Zero();

            Vec3 acc = Vec3::Zero();
            double wsum = 0.0;
            for (int dy = -p.radius; dy <= p.radius; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= img.height) continue;
                for (int dx = -p.radius; dx <= p.radius; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= img.width) continue;
                    const Vec3 c = img.rgb(xx, yy);
                    double w = std::exp(-(dx * dx + dy * dy) * inv2_sp);
                    w *= std::exp(-(c - c0).squaredNorm() * inv2_col);
                    if (d0_ok && depth.valid(xx, yy)) {
                        const double dd = depth.at(xx, yy) - d0;
                        w *= std::exp(-dd * dd * inv2_dep);
                    }
                    if (n0_ok && normals.valid(xx, yy)) {
                        const double affinity = 1.0 - n0.dot(normals.at(xx, yy));
                        w *= std::exp(-affinity * affinity * inv2_nrm);
                    }
                    acc += w * c;
                    wsum += w;
                }
            }
            out.set_rgb(x, y, acc / wsum); // center weight is 1, wsum > 0
        }
    }
    return out;
}

} // namespace splat
