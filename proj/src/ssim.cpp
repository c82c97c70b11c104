#include "splatpaint/ssim.hpp"

#include <cmath>

namespace splat {
namespace {

std::vector<double> gaussian_kernel(int radius, double sigma) {
    std::vector<double> k(size_t(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[size_t(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[size_t(i + radius)];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Border-clipped separable convolution context. Windows are renormalized by
// the product of clipped 1D kernel sums, which factorizes exactly.
struct ConvCtx {
    int w, h, radius;
    std::vector<double> kernel;
    std::vector<double> zx, zy; // clipped kernel sums per column/row

    ConvCtx(int width, int height, const SsimOptions& opt)
        : w(width), h(height), radius(opt.radius), kernel(gaussian_kernel(opt.radius, opt.sigma)) {
        zx.resize(size_t(w));
        zy.resize(size_t(h));
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k)
                if (x + k >= 0 && x + k < w) s += kernel[size_t(k + radius)];
            zx[size_t(x)] = s;
        }
        for (int y = 0; y < h; ++y) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k)
                if (y + k >= 0 && y + k < h) s += kernel[size_t(k + radius)];
            zy[size_t(y)] = s;
        }
    }

    // Raw clipped convolution (no renormalization).
    std::vector<double> conv(const std::vector<double>& in) const {
        std::vector<double> tmp(in.size()), out(in.size());
#pragma omp parallel for schedule(static)
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                const int k0 = std::max(-radius, -x), k1 = std::min(radius, w - 1 - x);
                for (int k = k0; k <= k1; ++k)
                    s += kernel[size_t(k + radius)] * in[size_t(y) * w + x + k];
                tmp[size_t(y) * w + x] = s;
            }
        }
#pragma omp parallel for schedule(static)
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                const int k0 = std::max(-radius, -y), k1 = std::min(radius, h - 1 - y);
                for (int k = k0; k <= k1; ++k)
                    s += kernel[size_t(k + radius)] * tmp[size_t(y + k) * w + x];
                out[size_t(y) * w + x] = s;
            }
        }
        return out;
    }

    // Renormalized window mean.
    std::vector<double> wmean(const std::vector<double>& in) const {
        std::vector<double> out = conv(in);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out[size_t(y) * w + x] /= zx[size_t(x)] * zy[size_t(y)];
        return out;
    }

    // Adjoint of wmean: sum_p kernel(q-p) F(p) / Z(p). The kernel is
    // symmetric, so this is conv applied to F/Z.
    std::vector<double> adjoint(std::vector<double> f) const {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) f[size_t(y) * w + x] /= zx[size_t(x)] * zy[size_t(y)];
        return conv(f);
    }
};

struct SsimFields {
    std::vector<double> mu_a, mu_b, va, vb, cab;
};

SsimFields ssim_fields(const ConvCtx& ctx, const Plane& a, const Plane& b) {
    SsimFields f;
    const size_t n = a.size();
    f.mu_a = ctx.wmean(a.values);
    f.mu_b = ctx.wmean(b.values);
    std::vector<double> aa(n), bb(n), ab(n);
    for (size_t i = 0; i < n; ++i) {
        aa[i] = a.values[i] * a.values[i];
        bb[i] = b.values[i] * b.values[i];
        ab[i] = a.values[i] * b.values[i];
    }
    f.va = ctx.wmean(aa);
    f.vb = ctx.wmean(bb);
    f.cab = ctx.wmean(ab);
    for (size_t i = 0; i < n; ++i) {
        f.va[i] -= f.mu_a[i] * f.mu_a[i];
        f.vb[i] -= f.mu_b[i] * f.mu_b[i];
        f.cab[i] -= f.mu_a[i] * f.mu_b[i];
    }
    return f;
}

} // namespace

std::vector<uint8_t> window_mask_from_excluded(const MaskImage& excluded, int radius) {
    const int w = excluded.width, h = excluded.height;
    // Row-wise then column-wise sliding "any" over the clipped support.
    std::vector<uint8_t> rows(size_t(w) * h, 0), out(size_t(w) * h, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            uint8_t any = 0;
            for (int k = std::max(0, x - radius); k <= std::min(w - 1, x + radius) && !any; ++k)
                any = excluded.at(k, y);
            rows[size_t(y) * w + x] = any;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            uint8_t any = 0;
            for (int k = std::max(0, y - radius); k <= std::min(h - 1, y + radius) && !any; ++k)
                any = rows[size_t(k) * w + x];
            out[size_t(y) * w + x] = any ? 0 : 1;
        }
    }
    return out;
}

SsimResult ssim_plane(const Plane& a, const Plane& b, const std::vector<uint8_t>* valid_window,
                      const SsimOptions& opt) {
    require_same_dims(a.width, a.height, b.width, b.height, "ssim");
    const ConvCtx ctx(a.width, a.height, opt);
    const SsimFields f = ssim_fields(ctx, a, b);
    const double c1 = opt.k1 * opt.k1, c2 = opt.k2 * opt.k2;

    SsimResult res;
    double sum = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        if (valid_window && !(*valid_window)[i]) continue;
        const double a1 = 2.0 * f.mu_a[i] * f.mu_b[i] + c1;
        const double a2 = 2.0 * f.cab[i] + c2;
        const double b1 = f.mu_a[i] * f.mu_a[i] + f.mu_b[i] * f.mu_b[i] + c1;
        const double b2 = f.va[i] + f.vb[i] + c2;
        sum += (a1 * a2) / (b1 * b2);
        ++res.valid_count;
    }
    res.mean = res.valid_count ? sum / double(res.valid_count) : 0.0;
    return res;
}

SsimResult ssim_plane_grad(const Plane& a, const Plane& b, std::vector<uint8_t> const* valid_window,
                           Plane& grad_a, const SsimOptions& opt) {
    require_same_dims(a.width, a.height, b.width, b.height, "ssim");
    const ConvCtx ctx(a.width, a.height, opt);
    const SsimFields f = ssim_fields(ctx, a, b);
    const double c1 = opt.k1 * opt.k1, c2 = opt.k2 * opt.k2;
    const size_t n = a.size();

    size_t count = 0;
    if (valid_window) {
        for (size_t i = 0; i < n; ++i) count += (*valid_window)[i] ? 1 : 0;
    } else {
        count = n;
    }
    grad_a = Plane(a.width, a.height);
    if (count == 0) return {0.0, 0};

    const double u = 1.0 / double(count);
    SsimResult res;
    res.valid_count = count;
    double sum = 0.0;

    std::vector<double> f1(n, 0.0), f2(n, 0.0), f3(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        if (valid_window && !(*valid_window)[i]) continue;
        const double mu_a = f.mu_a[i], mu_b = f.mu_b[i];
        const double a1 = 2.0 * mu_a * mu_b + c1;
        const double a2 = 2.0 * f.cab[i] + c2;
        const double b1 = mu_a * mu_a + mu_b * mu_b + c1;
        const double b2 = f.va[i] + f.vb[i] + c2;
        const double inv_bb = 1.0 / (b1 * b2);
        const double s = a1 * a2 * inv_bb;
        sum += s;

        const double g_mu = 2.0 * mu_b * a2 * inv_bb - 2.0 * mu_a * s / b1;
        const double g_v = -s / b2;
        const double g_c = 2.0 * a1 * inv_bb;
        f1[i] = u * (g_mu - 2.0 * g_v * mu_a - g_c * mu_b);
        f2[i] = u * 2.0 * g_v;
        f3[i] = u * g_c;
    }
    res.mean = sum / double(count);

    const std::vector<double> ad1 = ctx.adjoint(std::move(f1));
    const std::vector<double> ad2 = ctx.adjoint(std::move(f2));
    const std::vector<double> ad3 = ctx.adjoint(std::move(f3));
    for (size_t i = 0; i < n; ++i)
        grad_a.values[i] = ad1[i] + a.values[i] * ad2[i] + b.values[i] * ad3[i];
    return res;
}

namespace {

Plane channel_plane(const ImageBuffer& img, int c) {
    Plane p(img.width, img.height);
    for (size_t i = 0; i < img.pixel_count(); ++i) p.values[i] = img.pixels[i * 3 + c];
    return p;
}

} // namespace

SsimResult ssim_rgb(const ImageBuffer& a, const ImageBuffer& b,
                    const std::vector<uint8_t>* valid_window, const SsimOptions& opt) {
    SsimResult total;
    for (int c = 0; c < 3; ++c) {
        const SsimResult r = ssim_plane(channel_plane(a, c), channel_plane(b, c), valid_window, opt);
        total.mean += r.mean / 3.0;
        total.valid_count = r.valid_count;
    }
    return total;
}

SsimResult ssim_rgb_grad(const ImageBuffer& a, const ImageBuffer& b,
                         const std::vector<uint8_t>* valid_window, double upstream,
                         std::vector<double>& grad_a, const SsimOptions& opt) {
    SsimResult total;
    for (int c = 0; c < 3; ++c) {
        Plane g;
        const SsimResult r =
            ssim_plane_grad(channel_plane(a, c), channel_plane(b, c), valid_window, g, opt);
        total.mean += r.mean / 3.0;
        total.valid_count = r.valid_count;
        const double scale = upstream / 3.0;
        for (size_t i = 0; i < g.size(); ++i) grad_a[i * 3 + c] += scale * g.values[i];
    }
    return total;
}

} // namespace splat
