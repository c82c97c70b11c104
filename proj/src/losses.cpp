#include "splatpaint/losses.hpp"

#include <algorithm>
#include <cmath>

#include "splatpaint/depth_ops.hpp"
#include "splatpaint/ssim.hpp"

namespace splat {
namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

} // namespace

double loss_color_set(const ImageBuffer& target, const ImageBuffer& rendered, const MaskImage& eval_set,
                      double lambda_ssim, PixelGrads* grads, double upstream) {
    require_same_dims(target.width, target.height, rendered.width, rendered.height, "loss_color");
    require_same_dims(target.width, target.height, eval_set.width, eval_set.height, "loss_color");

    const size_t count = eval_set.count();
    if (count == 0) throw ValidationError("loss_color: empty evaluation set");

    double l1 = 0.0;
    for (int y = 0; y < target.height; ++y) {
        for (int x = 0; x < target.width; ++x) {
            if (!eval_set.at(x, y)) continue;
            for (int c = 0; c < 3; ++c) l1 += std::abs(target.at(x, y, c) - rendered.at(x, y, c));
        }
    }
    l1 /= double(count) * 3.0;

    if (grads && lambda_ssim < 1.0) {
        const double scale = upstream * (1.0 - lambda_ssim) / (double(count) * 3.0);
        for (int y = 0; y < target.height; ++y) {
            for (int x = 0; x < target.width; ++x) {
                if (!eval_set.at(x, y)) continue;
                const size_t i = (size_t(y) * target.width + x) * 3;
                for (int c = 0; c < 3; ++c)
                    grads->d_color[i + c] += scale * sign(rendered.at(x, y, c) - target.at(x, y, c));
            }
        }
    }

    double dssim = 0.0;
    if (lambda_ssim > 0.0) {
        const std::vector<uint8_t> windows = window_mask_from_excluded(eval_set.complement());
        SsimResult res;
        if (grads) {
            res = ssim_rgb_grad(rendered, target, &windows, -upstream * lambda_ssim, grads->d_color);
        } else {
            res = ssim_rgb(rendered, target, &windows);
        }
        // No fully-inside window: the D-SSIM term imposes no constraint.
        dssim = res.valid_count ? 1.0 - res.mean : 0.0;
    }

    return (1.0 - lambda_ssim) * l1 + lambda_ssim * dssim;
}

double loss_color_masked(const ImageBuffer& target, const ImageBuffer& rendered, const MaskImage& mask,
                         double lambda_ssim, PixelGrads* grads, double upstream) {
    const MaskImage set = mask.complement();
    if (set.count() == 0) throw ValidationError("loss_color_masked: mask complement is empty");
    return loss_color_set(target, rendered, set, lambda_ssim, grads, upstream);
}

double loss_depth_initial(const DepthMap& d_target, const DepthMap& d_rendered, const MaskImage& mask,
                          PixelGrads* grads, double upstream) {
    require_same_dims(d_target.width, d_target.height, d_rendered.width, d_rendered.height,
                      "loss_depth");
    size_t count = 0;
    double sum = 0.0;
    for (int y = 0; y < d_target.height; ++y) {
        for (int x = 0; x < d_target.width; ++x) {
            if (mask.at(x, y) || !d_target.valid(x, y) || !d_rendered.valid(x, y)) continue;
            sum += std::abs(d_target.at(x, y) - d_rendered.at(x, y));
            ++count;
        }
    }
    if (count == 0) throw ValidationError("loss_depth_initial: no valid unmasked pixels");
    if (grads) {
        const double scale = upstream / double(count);
        for (int y = 0; y < d_target.height; ++y) {
            for (int x = 0; x < d_target.width; ++x) {
                if (mask.at(x, y) || !d_target.valid(x, y) || !d_rendered.valid(x, y)) continue;
                grads->d_depth[size_t(y) * d_target.width + x] +=
                    scale * sign(d_rendered.at(x, y) - d_target.at(x, y));
            }
        }
    }
    return sum / double(count);
}

double loss_depth_inpaint(const DepthMap& d_target, const DepthMap& d_rendered, const MaskImage& mask,
                          double w_inp, PixelGrads* grads, double upstream) {
    require_same_dims(d_target.width, d_target.height, d_rendered.width, d_rendered.height,
                      "loss_depth");
    size_t count = 0;
    double sum_bg = 0.0, sum_inp = 0.0;
    for (int y = 0; y < d_target.height; ++y) {
        for (int x = 0; x < d_target.width; ++x) {
            if (!d_target.valid(x, y) || !d_rendered.valid(x, y)) continue;
            ++count;
            const double gap = std::abs(d_target.at(x, y) - d_rendered.at(x, y));
            if (mask.at(x, y))
                sum_inp += gap;
            else
                sum_bg += gap;
        }
    }
    if (count == 0) return 0.0;
    if (grads) {
        const double scale = upstream / double(count);
        for (int y = 0; y < d_target.height; ++y) {
            for (int x = 0; x < d_target.width; ++x) {
                if (!d_target.valid(x, y) || !d_rendered.valid(x, y)) continue;
                const double wgt = mask.at(x, y) ? w_inp : 1.0;
                grads->d_depth[size_t(y) * d_target.width + x] +=
                    scale * wgt * sign(d_rendered.at(x, y) - d_target.at(x, y));
            }
        }
    }
    return (sum_bg + w_inp * sum_inp) / double(count);
}

double loss_normal(const NormalMap& n_target, const NormalMap& n_rendered, const PatchRect& patch,
                   double w_inp, const DepthMap& d_rendered, const CameraView& cam, PixelGrads* grads,
                   double upstream) {
    require_same_dims(n_target.width, n_target.height, n_rendered.width, n_rendered.height,
                      "loss_normal");

    const int x0 = std::max(0, patch.x), x1 = std::min(n_target.width, patch.x_end());
    const int y0 = std::max(0, patch.y), y1 = std::min(n_target.height, patch.y_end());
    size_t count = 0;
    double cos_sum = 0.0;
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            if (!n_target.valid(x, y) || !n_rendered.valid(x, y)) continue;
            cos_sum += n_target.at(x, y).dot(n_rendered.at(x, y));
            ++count;
        }
    }
    if (count == 0) throw ValidationError("loss_normal: no mutually valid pixels in the patch");

    if (grads && w_inp != 0.0) {
        std::vector<double> g_normal(size_t(n_target.width) * n_target.height * 3, 0.0);
        const double scale = -upstream * w_inp / double(count);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                if (!n_target.valid(x, y) || !n_rendered.valid(x, y)) continue;
                const Vec3 nt = n_target.at(x, y);
                const size_t i = (size_t(y) * n_target.width + x) * 3;
                g_normal[i] = scale * nt[0];
                g_normal[i + 1] = scale * nt[1];
                g_normal[i + 2] = scale * nt[2];
            }
        }
        Plane g_depth(d_rendered.width, d_rendered.height);
        normal_from_depth_vjp(d_rendered, cam, g_normal, g_depth);
        for (size_t i = 0; i < g_depth.size(); ++i) grads->d_depth[i] += g_depth.values[i];
    }
    return w_inp * (1.0 - cos_sum / double(count));
}

double loss_perceptual_patch(const ImageBuffer& pseudo_gt, const ImageBuffer& rendered,
                             const PatchRect& patch, double w_inp, PixelGrads* grads, double upstream) {
    if (w_inp == 0.0) return 0.0;
    require_same_dims(pseudo_gt.width, pseudo_gt.height, rendered.width, rendered.height,
                      "loss_perceptual");
    const ImageBuffer a = crop(rendered, patch);
    const ImageBuffer b = crop(pseudo_gt, patch);
    if (!grads) return w_inp * perceptual_distance(a, b);

    std::vector<double> g_patch(size_t(patch.width) * patch.height * 3, 0.0);
    const double dist = perceptual_distance_grad(a, b, upstream * w_inp, g_patch);
    for (int y = 0; y < patch.height; ++y) {
        for (int x = 0; x < patch.width; ++x) {
            const size_t src = (size_t(y) * patch.width + x) * 3;
            const size_t dst = (size_t(y + patch.y) * rendered.width + (x + patch.x)) * 3;
            for (int c = 0; c < 3; ++c) grads->d_color[dst + c] += g_patch[src + c];
        }
    }
    return w_inp * dist;
}

} // namespace splat
