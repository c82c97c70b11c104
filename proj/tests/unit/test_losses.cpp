#include <doctest.h>

#include <random>

#include "splatpaint/depth_ops.hpp"
#include "splatpaint/losses.hpp"
#include "splatpaint/ssim.hpp"
#include "test_util.hpp"

using namespace splat;
using namespace testutil;

namespace {

RenderSettings exact_settings() {
    RenderSettings s;
    s.exact_gradients = true;
    return s;
}

// Independent straight-line oracle for the two-term color loss.
double color_loss_oracle(const ImageBuffer& target, const ImageBuffer& rendered,
                         const MaskImage& eval_set, double lambda) {
    double l1 = 0.0;
    size_t count = 0;
    for (int y = 0; y < target.height; ++y)
        for (int x = 0; x < target.width; ++x) {
            if (!eval_set.at(x, y)) continue;
            ++count;
            for (int c = 0; c < 3; ++c) l1 += std::abs(target.at(x, y, c) - rendered.at(x, y, c));
        }
    l1 /= double(count) * 3.0;

    // Brute-force window mask: a window is valid iff its clipped support
    // contains only evaluation-set pixels.
    std::vector<uint8_t> windows(size_t(target.width) * target.height, 0);
    for (int cy = 0; cy < target.height; ++cy)
        for (int cx = 0; cx < target.width; ++cx) {
            bool ok = true;
            for (int dy = -5; dy <= 5; ++dy)
                for (int dx = -5; dx <= 5; ++dx) {
                    const int x = cx + dx, y = cy + dy;
                    if (x < 0 || x >= target.width || y < 0 || y >= target.height) continue;
                    ok &= eval_set.at(x, y);
                }
            windows[size_t(cy) * target.width + cx] = ok ? 1 : 0;
        }
    size_t wcount = 0;
    for (uint8_t w : windows) wcount += w;

    double dssim = 0.0;
    if (wcount > 0) {
        double mean = 0.0;
        for (int c = 0; c < 3; ++c) {
            Plane pa(target.width, target.height), pb(target.width, target.height);
            for (size_t i = 0; i < pa.size(); ++i) {
                pa.values[i] = rendered.pixels[i * 3 + c];
                pb.values[i] = target.pixels[i * 3 + c];
            }
            mean += ssim_oracle_plane(pa, pb, &windows) / 3.0;
        }
        dssim = 1.0 - mean;
    }
    return (1.0 - lambda) * l1 + lambda * dssim;
}

// A dense "wall" of big opaque splats: alpha well above the validity floor
// everywhere, depth gaps far beyond the finite-difference step.
std::vector<Gaussian3D> wall_scene(unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<Gaussian3D> gs;
    int idx = 0;
    for (int gy = 0; gy < 3; ++gy)
        for (int gx = 0; gx < 4; ++gx) {
            Gaussian3D g;
            g.position = Vec3(-0.45 + 0.3 * gx, -0.3 + 0.3 * gy, 2.0 + 0.03 * idx);
            g.rotation = Vec4(1.0, 0.15 * (uni(rng) - 0.5), 0.15 * (uni(rng) - 0.5),
                              0.15 * (uni(rng) - 0.5));
            g.normalize_rotation();
            g.log_scale = Vec3::Constant(std::log(0.30 + 0.05 * uni(rng)));
            g.opacity_logit = logit(0.92);
            g.color = Vec3(uni(rng), uni(rng), uni(rng));
            ++idx;
            gs.push_back(g);
        }
    return gs;
}

MaskImage center_mask(int w, int h) {
    MaskImage m(w, h);
    for (int y = h / 3; y < 2 * h / 3; ++y)
        for (int x = w / 3; x < 2 * w / 3; ++x) m.set(x, y, true);
    return m;
}

} // namespace

TEST_CASE("loss_color_masked: fixed point, plain-L1 arithmetic, oracle match") {
    const ImageBuffer img = random_image(30, 24, 3);
    const MaskImage mask = center_mask(30, 24);

    CHECK(loss_color_masked(img, img, mask, 0.2) == doctest::Approx(0.0).epsilon(1e-15));

    ImageBuffer shifted = img;
    for (double& v : shifted.pixels) v += 0.1;
    CHECK(loss_color_masked(img, shifted, mask, 0.0) == doctest::Approx(0.1).epsilon(1e-12));

    const ImageBuffer other = random_image(30, 24, 4);
    const double mine = loss_color_masked(img, other, mask, 0.2);
    CHECK(mine == doctest::Approx(color_loss_oracle(img, other, mask.complement(), 0.2)).epsilon(1e-9));
    CHECK_THROWS_AS(loss_color_masked(img, other, MaskImage(30, 24, true), 0.2), ValidationError);
}

TEST_CASE("loss_color_set: degenerate union equals the masked loss") {
    const ImageBuffer img = random_image(26, 20, 5);
    const ImageBuffer rendered = random_image(26, 20, 6);
    const MaskImage mask = center_mask(26, 20);
    const double a = loss_color_set(img, rendered, mask.complement(), 0.2);
    const double b = loss_color_masked(img, rendered, mask, 0.2);
    CHECK(a == doctest::Approx(b).epsilon(1e-15));
}

TEST_CASE("depth losses: fixed points, weight annihilation/unity, direct-sum oracle") {
    const int w = 24, h = 18;
    DepthMap target{w, h}, rendered{w, h};
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> uni(1.0, 3.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            target.set(x, y, uni(rng));
            rendered.set(x, y, uni(rng));
        }
    const MaskImage mask = center_mask(w, h);

    CHECK(loss_depth_initial(target, target, mask) == 0.0);
    DepthMap gap = target;
    for (double& v : gap.values) v += 0.5;
    CHECK(loss_depth_initial(target, gap, mask) == doctest::Approx(0.5).epsilon(1e-12));

    // Direct-sum oracles.
    double sum_bg = 0.0, sum_m = 0.0;
    size_t n_bg = 0, n_all = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double d = std::abs(target.at(x, y) - rendered.at(x, y));
            ++n_all;
            if (mask.at(x, y))
                sum_m += d;
            else {
                sum_bg += d;
                ++n_bg;
            }
        }
    CHECK(loss_depth_initial(target, rendered, mask) ==
          doctest::Approx(sum_bg / double(n_bg)).epsilon(1e-9));
    CHECK(loss_depth_inpaint(target, rendered, mask, 0.5) ==
          doctest::Approx((sum_bg + 0.5 * sum_m) / double(n_all)).epsilon(1e-9));
    CHECK(loss_depth_inpaint(target, rendered, mask, 0.0) ==
          doctest::Approx(sum_bg / double(n_all)).epsilon(1e-12));
    CHECK(loss_depth_inpaint(target, rendered, mask, 1.0) ==
          doctest::Approx((sum_bg + sum_m) / double(n_all)).epsilon(1e-12));
}

TEST_CASE("loss_normal: parallel zero, antiparallel 2w, direct oracle") {
    const CameraView cam = simple_camera(20, 16);
    DepthMap d{20, 16};
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> uni(1.9, 2.1);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 20; ++x) d.set(x, y, uni(rng));
    const NormalMap n = normal_from_depth(d, cam);
    const PatchRect patch{4, 4, 10, 8};

    CHECK(loss_normal(n, n, patch, 0.7, d, cam) == doctest::Approx(0.0).epsilon(1e-15));

    NormalMap flipped = n;
    for (double& v : flipped.values) v = -v;
    CHECK(loss_normal(flipped, n, patch, 0.7, d, cam) == doctest::Approx(1.4).epsilon(1e-12));

    // Random unit target field vs direct mean-of-dots oracle.
    NormalMap randn = n;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 20; ++x) {
            Vec3 v(gauss(rng), gauss(rng), gauss(rng));
            if (randn.valid(x, y)) randn.set(x, y, v.normalized());
        }
    double dots = 0.0;
    size_t cnt = 0;
    for (int y = patch.y; y < patch.y_end(); ++y)
        for (int x = patch.x; x < patch.x_end(); ++x)
            if (randn.valid(x, y) && n.valid(x, y)) {
                dots += randn.at(x, y).dot(n.at(x, y));
                ++cnt;
            }
    const double oracle = 0.7 * (1.0 - dots / double(cnt));
    CHECK(loss_normal(randn, n, patch, 0.7, d, cam) == doctest::Approx(oracle).epsilon(1e-9));

    // No mutually valid pixels: empty depth makes every normal invalid.
    DepthMap empty{20, 16};
    const NormalMap none = normal_from_depth(empty, cam);
    CHECK_THROWS_AS(loss_normal(n, none, patch, 0.7, empty, cam), ValidationError);
}

TEST_CASE("loss_perceptual_patch: fixed point, zero weight, metric oracle") {
    const ImageBuffer a = random_image(40, 32, 11);
    const ImageBuffer b = random_image(40, 32, 12);
    const PatchRect patch{4, 6, 24, 20};

    CHECK(loss_perceptual_patch(a, a, patch, 0.8) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(loss_perceptual_patch(a, b, patch, 0.0) == 0.0);
    const double expect = 0.8 * perceptual_distance(crop(b, patch), crop(a, patch));
    CHECK(loss_perceptual_patch(a, b, patch, 0.8) == doctest::Approx(expect).epsilon(1e-9));
}

// Full-chain finite differences:each loss term drives the renderer backward.
namespace {

struct ChainFixture {
    CameraView cam = simple_camera(40, 32);
    RenderSettings settings = exact_settings();
    std::vector<Gaussian3D> gs = wall_scene(31);
    MaskImage mask = center_mask(40, 32);
    ImageBuffer target_img = random_image(40, 32, 41);
    DepthMap target_depth;
    NormalMap target_normals;
    PatchRect patch{12, 8, 18, 18};

    ChainFixture() {
        target_depth = DepthMap{40, 32};
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 40; ++x) target_depth.set(x, y, 2.5 + 0.003 * x + 0.002 * y);
        target_normals = normal_from_depth(target_depth, cam);
    }

    std::vector<GaussianGrad> analytic(const std::function<double(const RenderOutput&, PixelGrads&)>& term) const {
        const RenderOutput out = render(gs, cam, settings);
        PixelGrads pg(cam.width, cam.height);
        term(out, pg);
        return render_with_gradients(gs, cam, pg, settings);
    }

    SceneLoss fd_loss(const std::function<double(const RenderOutput&, PixelGrads&)>& term) const {
        return [this, term](const std::vector<Gaussian3D>& g) {
            const RenderOutput out = render(g, cam, settings);
            PixelGrads pg(cam.width, cam.height);
            return term(out, pg);
        };
    }
};

} // namespace

TEST_CASE("full-chain gradients: masked color loss (L1 + D-SSIM)") {
    ChainFixture fx;
    const auto term = [&](const RenderOutput& out, PixelGrads& pg) {
        return loss_color_masked(fx.target_img, out.color, fx.mask, 0.2, &pg);
    };
    const auto grads = fx.analytic(term);
    const auto res = check_gradients(fx.gs, grads, fx.fd_loss(term), 1e-4, 1e-3, 1e-7);
    INFO("worst rel " << res.worst_rel << " at gaussian " << res.worst_gaussian << " param "
                      << res.worst_param);
    CHECK(res.failures == 0);
}

TEST_CASE("full-chain gradients: inpaint depth loss") {
    ChainFixture fx;
    const auto term = [&](const RenderOutput& out, PixelGrads& pg) {
        return loss_depth_inpaint(fx.target_depth, out.depth, fx.mask, 0.6, &pg);
    };
    const auto grads = fx.analytic(term);
    const auto res = check_gradients(fx.gs, grads, fx.fd_loss(term), 1e-4, 1e-3, 1e-7);
    INFO("worst rel " << res.worst_rel);
    CHECK(res.failures == 0);
}

TEST_CASE("full-chain gradients: normal loss through depth derivation") {
    ChainFixture fx;
    const auto term = [&](const RenderOutput& out, PixelGrads& pg) {
        return loss_normal(fx.target_normals, out.normal, fx.patch, 0.8, out.depth, fx.cam, &pg);
    };
    const auto grads = fx.analytic(term);
    const auto res = check_gradients(fx.gs, grads, fx.fd_loss(term), 1e-4, 1e-3, 1e-7);
    INFO("worst rel " << res.worst_rel << " analytic " << res.worst_analytic << " fd "
                      << res.worst_fd);
    CHECK(res.failures == 0);
}

TEST_CASE("full-chain gradients: perceptual patch loss") {
    ChainFixture fx;
    const auto term = [&](const RenderOutput& out, PixelGrads& pg) {
        return loss_perceptual_patch(fx.target_img, out.color, fx.patch, 0.9, &pg);
    };
    const auto grads = fx.analytic(term);
    const auto res = check_gradients(fx.gs, grads, fx.fd_loss(term), 1e-4, 1e-3, 1e-7);
    INFO("worst rel " << res.worst_rel);
    CHECK(res.failures == 0);
}

TEST_CASE("total loss is linear in the lambda weights for fixed renders") {
    ChainFixture fx;
    const RenderOutput out = render(fx.gs, fx.cam, fx.settings);
    const double lc = loss_color_masked(fx.target_img, out.color, fx.mask, 0.2);
    const double ld = loss_depth_inpaint(fx.target_depth, out.depth, fx.mask, 0.6);
    const double ln = loss_normal(fx.target_normals, out.normal, fx.patch, 0.8, out.depth, fx.cam);
    const double lp = loss_perceptual_patch(fx.target_img, out.color, fx.patch, 0.9);

    // The composed total as the trainer evaluates it.
    const auto total = [&](double wd, double wn, double wp) {
        return lc + wd * ld + wn * ln + wp * lp;
    };
    // Linearity: total(w1 + w2) + total(0) == total(w1) + total(w2).
    const double lhs = total(0.5 + 1.0, 0.1 + 2.0, 0.5 + 0.25) + total(0, 0, 0);
    const double rhs = total(0.5, 0.1, 0.5) + total(1.0, 2.0, 0.25);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-15));
    // Every component is non-negative and vanishes only at its fixed point.
    CHECK(lc >= 0.0);
    CHECK(ld >= 0.0);
    CHECK(ln >= 0.0);
    CHECK(lp >= 0.0);
    CHECK(loss_color_masked(out.color, out.color, fx.mask, 0.2) == 0.0);
}
