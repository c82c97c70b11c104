#include <doctest.h>

#include <algorithm>
#include <random>

#include "splatpaint/render.hpp"
#include "test_util.hpp"

using namespace splat;
using namespace testutil;

namespace {

RenderSettings exact_settings() {
    RenderSettings s;
    s.exact_gradients = true;
    return s;
}

// Scenes for gradient checks keep pairwise view-depth gaps well clear of the
// finite-difference step so depth sorting never flips.
std::vector<Gaussian3D> gradcheck_scene(int count, unsigned seed) {
    for (unsigned bump = 0; bump < 100; ++bump) {
        auto gs = random_gaussians(count, seed + bump);
        std::vector<double> z;
        for (const auto& g : gs) z.push_back(g.position.z());
        std::sort(z.begin(), z.end());
        bool ok = true;
        for (size_t i = 1; i < z.size(); ++i) ok &= z[i] - z[i - 1] > 1e-2;
        if (ok) return gs;
    }
    REQUIRE(false);
    return {};
}

// Fixed-pixel quadratic loss over color and (where selected) depth.
struct QuadLoss {
    CameraView cam;
    RenderSettings settings;
    ImageBuffer color_target;
    Plane depth_target;
    std::vector<uint8_t> use_depth; // frozen at the base point

    double operator()(const std::vector<Gaussian3D>& gs) const {
        const RenderOutput out = render(gs, cam, settings);
        double loss = 0.0;
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    const double d = out.color.at(x, y, c) - color_target.at(x, y, c);
                    loss += d * d;
                }
                if (use_depth[size_t(y) * cam.width + x]) {
                    const double d =
                        out.depth.values[size_t(y) * cam.width + x] - depth_target.at(x, y);
                    loss += 0.5 * d * d;
                }
            }
        return loss;
    }

    PixelGrads pixel_grads(const RenderOutput& out) const {
        PixelGrads pg(cam.width, cam.height);
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) {
                const size_t i = size_t(y) * cam.width + x;
                for (int c = 0; c < 3; ++c)
                    pg.d_color[i * 3 + c] =
                        2.0 * (out.color.at(x, y, c) - color_target.at(x, y, c));
                if (use_depth[i])
                    pg.d_depth[i] = out.depth.values[i] - depth_target.at(x, y);
            }
        return pg;
    }
};

QuadLoss make_quad_loss(const std::vector<Gaussian3D>& gs, const CameraView& cam,
                        const RenderSettings& s, unsigned seed) {
    QuadLoss q;
    q.cam = cam;
    q.settings = s;
    q.color_target = random_image(cam.width, cam.height, seed);
    q.depth_target = Plane(cam.width, cam.height, 2.0);
    q.use_depth.assign(size_t(cam.width) * cam.height, 0);
    const RenderOutput base = render(gs, cam, s);
    for (size_t i = 0; i < q.use_depth.size(); ++i)
        q.use_depth[i] = base.alpha.values[i] >= 0.7 ? 1 : 0; // clear of the validity floor
    return q;
}

} // namespace

TEST_CASE("projection: on-axis gaussian lands on the principal point") {
    CameraView cam;
    cam.width = 101;
    cam.height = 101;
    cam.fx = cam.fy = 100;
    cam.cx = cam.cy = 50;

    Gaussian3D g;
    g.position = Vec3(0, 0, 1);
    const auto p = project_gaussian(g, cam);
    REQUIRE(p.has_value());
    CHECK(p->mean2d.x() == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(p->mean2d.y() == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(p->view_depth == doctest::Approx(1.0));

    g.position = Vec3(0, 0, -1);
    CHECK(!project_gaussian(g, cam).has_value());
}

TEST_CASE("projection: fronto-parallel isotropic covariance matches the closed form") {
    CameraView cam = simple_camera(100, 80, 1.0);
    const double s = 0.07, z = 2.3;
    Gaussian3D g;
    g.position = Vec3(0, 0, z);
    g.log_scale = Vec3::Constant(std::log(s));

    RenderSettings rs;
    const auto p = project_gaussian(g, cam, rs);
    REQUIRE(p.has_value());
    // Oracle: J W Sigma W^T J^T evaluated by hand for the on-axis case.
    const double expect_x = (cam.fx * s / z) * (cam.fx * s / z) + rs.cov_regularization;
    const double expect_y = (cam.fy * s / z) * (cam.fy * s / z) + rs.cov_regularization;
    CHECK(p->cov2d(0, 0) == doctest::Approx(expect_x).epsilon(1e-12));
    CHECK(p->cov2d(1, 1) == doctest::Approx(expect_y).epsilon(1e-12));
    CHECK(p->cov2d(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("compositing: single near-opaque splat reproduces its color") {
    CameraView cam;
    cam.width = 101;
    cam.height = 101;
    cam.fx = cam.fy = 100;
    cam.cx = cam.cy = 50;

    Gaussian3D g;
    g.position = Vec3(0, 0, 1);
    g.log_scale = Vec3::Constant(std::log(0.05));
    g.opacity_logit = 30.0; // sigmoid ~ 1 - 1e-13
    g.color = Vec3(1, 0, 0);

    RenderSettings s;
    s.alpha_max = 1.0 - 1e-12;
    const RenderOutput out = render({g}, cam, s);
    CHECK(out.color.at(50, 50, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(out.color.at(50, 50, 1) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(out.depth.valid(50, 50));
    CHECK(out.depth.at(50, 50) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("compositing: two-splat arithmetic matches the hand computation") {
    CameraView cam;
    cam.width = 101;
    cam.height = 101;
    cam.fx = cam.fy = 100;
    cam.cx = cam.cy = 50;

    Gaussian3D a;
    a.position = Vec3(0, 0, 1);
    a.log_scale = Vec3::Constant(std::log(0.05));
    a.opacity_logit = 0.0; // exactly 0.5
    a.color = Vec3(1, 0, 0);
    Gaussian3D b = a;
    b.position = Vec3(0, 0, 2);
    b.log_scale = Vec3::Constant(std::log(0.10));
    b.color = Vec3(0, 1, 0);

    const RenderOutput out = render({b, a}, cam); // input order irrelevant
    CHECK(out.color.at(50, 50, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.color.at(50, 50, 1) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(out.color.at(50, 50, 2) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out.depth.at(50, 50) == doctest::Approx(0.5 * 1.0 + 0.25 * 2.0).epsilon(1e-12));
    CHECK(out.alpha.at(50, 50) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("compositing: empty scene gives background, zero alpha, invalid depth") {
    CameraView cam = simple_camera(32, 24);
    RenderSettings s;
    s.background = Vec3(0.2, 0.4, 0.6);
    const RenderOutput out = render({}, cam, s);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            REQUIRE(out.color.at(x, y, 0) == 0.2);
            REQUIRE(out.color.at(x, y, 2) == 0.6);
            REQUIRE(out.alpha.at(x, y) == 0.0);
            REQUIRE(!out.depth.valid(x, y));
        }
}

TEST_CASE("render is invariant under input permutation and matches the serial reference") {
    const CameraView cam = simple_camera(64, 48);
    auto gs = random_gaussians(60, 42);
    const RenderOutput a = render(gs, cam);
    const RenderOutput ref = render_reference(gs, cam);

    std::mt19937 rng(7);
    std::shuffle(gs.begin(), gs.end(), rng);
    const RenderOutput b = render(gs, cam);

    double max_diff = 0.0, max_ref = 0.0;
    for (size_t i = 0; i < a.color.pixels.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(a.color.pixels[i] - b.color.pixels[i]));
        max_ref = std::max(max_ref, std::abs(a.color.pixels[i] - ref.color.pixels[i]));
    }
    for (size_t i = 0; i < a.depth.values.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(a.depth.values[i] - b.depth.values[i]));
        max_ref = std::max(max_ref, std::abs(a.depth.values[i] - ref.depth.values[i]));
    }
    CHECK(max_diff <= 1e-6);
    CHECK(max_ref <= 1e-12);
}

TEST_CASE("energy bound: accumulated alpha never exceeds one") {
    const CameraView cam = simple_camera(64, 48);
    for (unsigned seed : {1u, 2u, 3u}) {
        const auto gs = random_gaussians(120, seed);
        const RenderOutput out = render(gs, cam);
        double amax = 0.0, amin = 0.0;
        for (double a : out.alpha.values) {
            amax = std::max(amax, a);
            amin = std::min(amin, a);
        }
        CHECK(amax <= 1.0 + 1e-6);
        CHECK(amin >= 0.0);
    }
}

TEST_CASE("gradients: zero upstream yields exact zeros") {
    const CameraView cam = simple_camera();
    const auto gs = gradcheck_scene(8, 10);
    const PixelGrads pg(cam.width, cam.height);
    const auto grads = render_with_gradients(gs, cam, pg, exact_settings());
    for (const GaussianGrad& g : grads)
        for (int k = 0; k < kGaussianParamCount; ++k) REQUIRE(grad_param(g, k) == 0.0);
}

TEST_CASE("gradients: culled gaussians get exact zeros, others real values") {
    const CameraView cam = simple_camera();
    auto gs = gradcheck_scene(4, 11);
    Gaussian3D behind;
    behind.position = Vec3(0, 0, -2.0);
    behind.color = Vec3(1, 1, 1);
    gs.push_back(behind);

    QuadLoss loss = make_quad_loss(gs, cam, exact_settings(), 77);
    const RenderOutput out = render(gs, cam, exact_settings());
    const auto grads = render_with_gradients(gs, cam, loss.pixel_grads(out), exact_settings());
    for (int k = 0; k < kGaussianParamCount; ++k) CHECK(grad_param(grads.back(), k) == 0.0);
    CHECK(grads.front().color.norm() > 0.0);
}

TEST_CASE("gradients: single-splat color gradient matches finite differences") {
    CameraView cam = simple_camera(32, 24);
    auto gs = gradcheck_scene(1, 5);
    const RenderSettings s = exact_settings();

    QuadLoss loss = make_quad_loss(gs, cam, s, 13);
    const RenderOutput out = render(gs, cam, s);
    const auto grads = render_with_gradients(gs, cam, loss.pixel_grads(out), s);
    const auto res = check_gradients(gs, grads, loss, 1e-4, 1e-3, 1e-7);
    CHECK(res.failures == 0);
}

TEST_CASE("gradients: 10-splat random scene matches finite differences on every parameter") {
    const CameraView cam = simple_camera();
    const RenderSettings s = exact_settings();
    for (unsigned seed : {21u, 22u}) {
        auto gs = gradcheck_scene(10, seed);
        QuadLoss loss = make_quad_loss(gs, cam, s, 100 + seed);
        const RenderOutput out = render(gs, cam, s);
        const auto grads = render_with_gradients(gs, cam, loss.pixel_grads(out), s);
        const auto res = check_gradients(gs, grads, loss, 1e-4, 1e-3, 1e-7);
        INFO("worst: gaussian " << res.worst_gaussian << " param " << res.worst_param << " analytic "
                                << res.worst_analytic << " fd " << res.worst_fd);
        CHECK(res.failures == 0);
        CHECK(res.checked == gs.size() * kGaussianParamCount);
    }
}
