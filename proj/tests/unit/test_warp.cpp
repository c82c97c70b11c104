#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "splatpaint/confidence.hpp"
#include "splatpaint/synth.hpp"
#include "splatpaint/warp.hpp"
#include "test_util.hpp"

using namespace splat;
using namespace testutil;

namespace {

CameraView translated_camera(const CameraView& base, const Vec3& world_offset) {
    CameraView cam = base;
    // world_to_cam(p) = R p + t; moving the center by d changes t by -R d.
    cam.translation = base.translation - base.rotation * world_offset;
    return cam;
}

// Smooth low-frequency test field.
ImageBuffer smooth_image(int w, int h, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 2.0 * M_PI);
    const double p1 = uni(rng), p2 = uni(rng), p3 = uni(rng);
    ImageBuffer img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img.set_rgb(x, y,
                        Vec3(0.5 + 0.4 * std::sin(2.0 * M_PI * x / w + p1),
                             0.5 + 0.4 * std::cos(2.0 * M_PI * y / h + p2),
                             0.5 + 0.3 * std::sin(2.0 * M_PI * (x + y) / (w + h) + p3)));
    return img;
}

} // namespace

TEST_CASE("reproject_pixel: identity camera is exact") {
    const CameraView cam = simple_camera(64, 48);
    const auto r = reproject_pixel(Vec2(17.25, 30.5), 2.3, cam, cam);
    REQUIRE(r.has_value());
    CHECK(r->pixel.x() == doctest::Approx(17.25).epsilon(1e-14));
    CHECK(r->pixel.y() == doctest::Approx(30.5).epsilon(1e-14));
    CHECK(r->depth == doctest::Approx(2.3).epsilon(1e-14));
}

TEST_CASE("reproject_pixel: pure x-translation gives the pinhole disparity") {
    CameraView cam = simple_camera(64, 48);
    cam.fx = cam.fy = 100.0;
    const CameraView cam2 = translated_camera(cam, Vec3(0.1, 0, 0));
    const auto r = reproject_pixel(Vec2(30, 20), 1.0, cam, cam2);
    REQUIRE(r.has_value());
    // disparity = fx * dx / z = 100 * 0.1 / 1 = 10 px (camera moved right,
    // content shifts left).
    CHECK(r->pixel.x() == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(r->pixel.y() == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("reproject_pixel: point behind the target camera is invalid") {
    const CameraView cam = simple_camera(64, 48);
    CameraView flipped = cam;
    // Rotate 180 degrees about y: looks the other way.
    flipped.rotation << -1, 0, 0, 0, 1, 0, 0, 0, -1;
    const auto r = reproject_pixel(Vec2(32, 24), 2.0, cam, flipped);
    CHECK(!r.has_value());
}

TEST_CASE("reprojection round trip recovers the source pixel") {
    CameraView a = simple_camera(64, 48);
    CameraView b = simple_camera(64, 48);
    // A small rotation plus translation.
    const double th = 0.15;
    b.rotation << std::cos(th), 0, std::sin(th), 0, 1, 0, -std::sin(th), 0, std::cos(th);
    b.translation = Vec3(0.2, -0.1, 0.05);

    std::mt19937 rng(3);
    std::uniform_real_distribution<double> px(5.0, 58.0), py(5.0, 42.0), pz(1.0, 4.0);
    for (int i = 0; i < 200; ++i) {
        const Vec2 p(px(rng), py(rng));
        const double z = pz(rng);
        const auto fwd = reproject_pixel(p, z, a, b);
        REQUIRE(fwd.has_value());
        const auto back = reproject_pixel(fwd->pixel, fwd->depth, b, a);
        REQUIRE(back.has_value());
        CHECK((back->pixel - p).norm() <= 1e-6);
        CHECK(back->depth == doctest::Approx(z).epsilon(1e-10));
    }
}

TEST_CASE("forward_warp: identity cameras reproduce the source with zero interpolation") {
    const CameraView cam = simple_camera(48, 36);
    const ImageBuffer src = smooth_image(48, 36, 4);
    DepthMap depth{48, 36};
    for (int y = 0; y < 36; ++y)
        for (int x = 0; x < 48; ++x) depth.set(x, y, 2.0 + 0.01 * x);

    const WarpResult wr = forward_warp(src, depth, cam, cam);
    CHECK(wr.interpolated.count() == 0);
    CHECK(wr.coverage.count() == size_t(48) * 36);
    double worst = 0.0;
    for (size_t i = 0; i < src.pixels.size(); ++i)
        worst = std::max(worst, std::abs(wr.warped.pixels[i] - src.pixels[i]));
    CHECK(worst == 0.0);
}

TEST_CASE("forward_warp: z-buffer keeps the nearer of two colliding samples") {
    // Two source pixels, crafted depths so both land on the same target pixel.
    const CameraView src_cam = simple_camera(8, 8, 1.0);
    const CameraView dst_cam = translated_camera(src_cam, Vec3(0.5, 0, 0));

    ImageBuffer src(8, 8);
    DepthMap depth{8, 8};
    // Pixel A at (4,4) depth 1: lands at x = 4 - fx*0.5/1 = 0.
    src.set_rgb(4, 4, Vec3(1, 0, 0));
    depth.set(4, 4, 1.0);
    // Pixel B at (2,4) depth 2: lands at x = 2 - fx*0.5/2 = 0.
    src.set_rgb(2, 4, Vec3(0, 1, 0));
    depth.set(2, 4, 2.0);

    ForwardWarpParams p;
    p.fill_holes = false;
    const WarpResult wr = forward_warp(src, depth, src_cam, dst_cam, p);
    REQUIRE(wr.coverage.at(0, 4));
    CHECK(wr.warped.rgb(0, 4) == Vec3(1, 0, 0)); // depth-1 sample wins
    CHECK(wr.warped_depth.at(0, 4) == doctest::Approx(1.0));
}

TEST_CASE("forward_warp on a synthetic two-plane scene matches the analytic render") {
    SynthSpec spec;
    spec.seed = 12;
    spec.width = 96;
    spec.height = 72;
    spec.view_count = 3;
    spec.add_foreground_plane = true;
    spec.texture_complexity = 0.3;
    spec.ring_arc_deg = 24.0;
    const SynthResult scene = generate_scene(spec);

    const int a = 0, b = 2;
    const ViewRecord& va = scene.dataset.views[a];
    const ViewRecord& vb = scene.dataset.views[b];
    const DepthMap& da = scene.dataset.gt_depths[a];
    const DepthMap& db = scene.dataset.gt_depths[b];

    const WarpResult wr = forward_warp(scene.dataset.gt_images[a], da, va.cam, vb.cam);

    // Occlusion oracle: target pixel is visible in the source view iff the
    // source GT depth at its reprojection matches the reprojected depth.
    double se = 0.0;
    size_t n = 0, collisions_checked = 0;
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            if (!wr.coverage.at(x, y) || wr.interpolated.at(x, y)) continue;
            if (!db.valid(x, y)) continue;
            const auto back = reproject_pixel(Vec2(x, y), db.at(x, y), vb.cam, va.cam);
            if (!back) continue;
            const int sx = int(std::lround(back->pixel.x()));
            const int sy = int(std::lround(back->pixel.y()));
            if (!da.in_bounds(sx, sy) || !da.valid(sx, sy)) continue;
            if (std::abs(da.at(sx, sy) - back->depth) > 0.01 * back->depth) continue; // occluded
            for (int c = 0; c < 3; ++c) {
                const double d = wr.warped.at(x, y, c) - scene.dataset.gt_images[b].at(x, y, c);
                se += d * d;
            }
            n += 3;
        }
    }
    REQUIRE(n > 1000);
    const double rmse = std::sqrt(se / double(n));
    CHECK(rmse < 0.05);

    // Z-buffer oracle replay: every covered pixel holds the minimum depth
    // among all candidates that mapped to it.
    DepthMap min_depth{spec.width, spec.height};
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            if (!da.valid(x, y)) continue;
            const auto r = reproject_pixel(Vec2(x, y), da.at(x, y), va.cam, vb.cam);
            if (!r) continue;
            const int tx = int(std::lround(r->pixel.x()));
            const int ty = int(std::lround(r->pixel.y()));
            if (!min_depth.in_bounds(tx, ty)) continue;
            if (!min_depth.valid(tx, ty) || r->depth < min_depth.at(tx, ty))
                min_depth.set(tx, ty, r->depth);
        }
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            if (!wr.coverage.at(x, y) || wr.interpolated.at(x, y)) continue;
            REQUIRE(min_depth.valid(x, y));
            REQUIRE(wr.warped_depth.at(x, y) == doctest::Approx(min_depth.at(x, y)).epsilon(1e-12));
            ++collisions_checked;
        }
    CHECK(collisions_checked > 1000);
}

TEST_CASE("consistency_set covers the spec examples") {
    const int w = 20, h = 16;
    DepthMap ref{w, h}, rep{w, h};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            ref.set(x, y, 2.0);
            rep.set(x, y, 2.0);
        }
    MaskImage mask(w, h);
    for (int y = 4; y < 12; ++y)
        for (int x = 5; x < 15; ++x) mask.set(x, y, true);
    const PatchRect patch{3, 2, 14, 12};
    const double tau = 0.05;

    SUBCASE("identical maps select everything") {
        const ConsistencySet s = consistency_set(ref, rep, patch, mask, tau);
        CHECK(s.member_count == s.candidate_count);
        CHECK(s.fraction() == 1.0);
        // P' subset of patch ∩ mask.
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (s.members.at(x, y)) REQUIRE((mask.at(x, y) && patch.contains(x, y)));
    }
    SUBCASE("uniform 2*tau gap selects nothing") {
        DepthMap far = rep;
        for (double& v : far.values) v += 2.0 * tau;
        const ConsistencySet s = consistency_set(ref, far, patch, mask, tau);
        CHECK(s.member_count == 0);
        CHECK(s.candidate_count > 0);
    }
    SUBCASE("half-offset patch keeps exactly the unshifted half") {
        DepthMap half = rep;
        for (int y = 0; y < h; ++y)
            for (int x = 10; x < w; ++x) half.values[size_t(y) * w + x] += 2.0 * tau;
        const ConsistencySet s = consistency_set(ref, half, patch, mask, tau);
        for (int y = 4; y < 12; ++y)
            for (int x = 5; x < 15; ++x) REQUIRE(s.members.at(x, y) == (x < 10));
    }
}

TEST_CASE("poisson_blend: constant boundary with zero guidance fills harmonically") {
    const int w = 24, h = 20;
    const ImageBuffer target(w, h, Vec3(0.7, 0.2, 0.5));
    const ImageBuffer source(w, h, Vec3(0.1, 0.1, 0.1)); // constant: zero Laplacian
    MaskImage region(w, h);
    for (int y = 5; y < 14; ++y)
        for (int x = 6; x < 17; ++x) region.set(x, y, true);

    const ImageBuffer out = poisson_blend(target, source, region);
    double worst = 0.0;
    for (size_t i = 0; i < out.pixels.size(); ++i)
        worst = std::max(worst, std::abs(out.pixels[i] - target.pixels[i]));
    CHECK(worst <= 1e-6); // harmonic interior of a constant boundary is constant
}

TEST_CASE("poisson_blend: source equal to target is a fixed point") {
    const ImageBuffer target = smooth_image(28, 22, 8);
    MaskImage region(28, 22);
    for (int y = 4; y < 17; ++y)
        for (int x = 3; x < 24; ++x) region.set(x, y, true);
    const ImageBuffer out = poisson_blend(target, target, region);
    double worst = 0.0;
    for (size_t i = 0; i < out.pixels.size(); ++i)
        worst = std::max(worst, std::abs(out.pixels[i] - target.pixels[i]));
    CHECK(worst <= 1e-6);
}

TEST_CASE("poisson_blend matches a dense direct solve and satisfies the residual bound") {
    const int w = 22, h = 20;
    const ImageBuffer target = smooth_image(w, h, 31);
    const ImageBuffer source = smooth_image(w, h, 77);
    MaskImage region(w, h);
    for (int y = 2; y < 18; ++y)
        for (int x = 3; x < 19; ++x) region.set(x, y, true);

    const ImageBuffer out = poisson_blend(target, source, region);

    // Dense oracle per channel: Gaussian elimination on the same system.
    std::vector<int> index(size_t(w) * h, -1);
    std::vector<std::pair<int, int>> px;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (region.at(x, y)) {
                index[size_t(y) * w + x] = int(px.size());
                px.push_back({x, y});
            }
    const size_t n = px.size();
    for (int c = 0; c < 3; ++c) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd b(n);
        for (size_t i = 0; i < n; ++i) {
            const auto [x, y] = px[i];
            a(long(i), long(i)) = 4.0;
            double rhs = -(source.at(x - 1, y, c) + source.at(x + 1, y, c) + source.at(x, y - 1, c) +
                           source.at(x, y + 1, c) - 4.0 * source.at(x, y, c));
            for (const auto [nx, ny] : {std::pair{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}}) {
                const int j = index[size_t(ny) * w + nx];
                if (j >= 0)
                    a(long(i), j) = -1.0;
                else
                    rhs += target.at(nx, ny, c);
            }
            b(long(i)) = rhs;
        }
        const Eigen::VectorXd u = Eigen::PartialPivLU<Eigen::MatrixXd>(a).solve(b);
        for (size_t i = 0; i < n; ++i) {
            const auto [x, y] = px[i];
            REQUIRE(std::abs(out.at(x, y, c) - u(long(i))) <= 1e-5);
        }

        // Interior residual bound on the discrete system.
        for (size_t i = 0; i < n; ++i) {
            const auto [x, y] = px[i];
            const double lap_u = out.at(x - 1, y, c) + out.at(x + 1, y, c) + out.at(x, y - 1, c) +
                                 out.at(x, y + 1, c) - 4.0 * out.at(x, y, c);
            const double lap_s = source.at(x - 1, y, c) + source.at(x + 1, y, c) +
                                 source.at(x, y - 1, c) + source.at(x, y + 1, c) -
                                 4.0 * source.at(x, y, c);
            REQUIRE(std::abs(lap_u - lap_s) <= 1e-6);
        }
    }

    // Pixels outside the region are exactly the target (Dirichlet boundary).
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (!region.at(x, y))
                for (int cc = 0; cc < 3; ++cc) REQUIRE(out.at(x, y, cc) == target.at(x, y, cc));
}

TEST_CASE("poisson_blend maximum principle with zero guidance") {
    const int w = 20, h = 18;
    const ImageBuffer target = smooth_image(w, h, 55);
    const ImageBuffer source(w, h, Vec3(0.5, 0.5, 0.5));
    MaskImage region(w, h);
    for (int y = 4; y < 14; ++y)
        for (int x = 5; x < 15; ++x) region.set(x, y, true);

    const ImageBuffer out = poisson_blend(target, source, region);
    for (int c = 0; c < 3; ++c) {
        double lo = 1e300, hi = -1e300;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (region.at(x, y)) continue;
                bool boundary = false;
                for (const auto [nx, ny] : {std::pair{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}})
                    if (region.in_bounds(nx, ny) && region.at(nx, ny)) boundary = true;
                if (!boundary) continue;
                lo = std::min(lo, target.at(x, y, c));
                hi = std::max(hi, target.at(x, y, c));
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (region.at(x, y)) {
                    REQUIRE(out.at(x, y, c) >= lo - 1e-6);
                    REQUIRE(out.at(x, y, c) <= hi + 1e-6);
                }
    }
}

TEST_CASE("poisson_blend rejects regions touching the image border") {
    const ImageBuffer target(16, 16, Vec3(0.5, 0.5, 0.5));
    MaskImage region(16, 16);
    region.set(0, 5, true);
    CHECK_THROWS_AS(poisson_blend(target, target, region), ValidationError);
}
