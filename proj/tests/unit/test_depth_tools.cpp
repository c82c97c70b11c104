#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "splatpaint/dataset.hpp"
#include "splatpaint/depth_ops.hpp"
#include "test_util.hpp"

using namespace splat;
using namespace testutil;

namespace {

DepthMap constant_depth(int w, int h, double v) {
    DepthMap d{w, h};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) d.set(x, y, v);
    return d;
}

// Independent least-squares oracle: explicit design matrix solved by SVD.
std::pair<double, double> normal_equation_oracle(const std::vector<double>& d,
                                                 const std::vector<double>& s) {
    Eigen::MatrixXd a(d.size(), 2);
    Eigen::VectorXd b(d.size());
    for (size_t i = 0; i < d.size(); ++i) {
        a(long(i), 0) = d[i];
        a(long(i), 1) = 1.0;
        b(long(i)) = s[i];
    }
    const Eigen::Vector2d x = a.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
    return {x[0], x[1]};
}

} // namespace

TEST_CASE("align_depth recovers an exact affine relation") {
    DepthMap mono{16, 12};
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> uni(0.5, 4.0);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 16; ++x) mono.set(x, y, uni(rng));

    SparseDepthSamples samples;
    for (auto [u, v] : {std::pair{1, 2}, {5, 7}, {9, 3}, {14, 11}, {2, 9}})
        samples.samples.push_back({u, v, 2.0 * mono.at(u, v) + 3.0});

    const AffineDepthFit fit = align_depth(mono, samples);
    CHECK(fit.scale == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(fit.shift == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(fit.residual_rms <= 1e-9);
    CHECK(fit.sample_count == 5);

    SUBCASE("identity relation gives a=1, b=0") {
        SparseDepthSamples id;
        for (auto [u, v] : {std::pair{0, 0}, {3, 4}, {8, 8}, {15, 1}})
            id.samples.push_back({u, v, mono.at(u, v)});
        const AffineDepthFit f = align_depth(mono, id);
        CHECK(f.scale == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(f.shift == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("align_depth matches an independent normal-equation oracle under noise") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> uni(1.0, 5.0);
    std::normal_distribution<double> noise(0.0, 0.01);

    DepthMap mono{32, 32};
    SparseDepthSamples samples;
    std::vector<double> dvals, svals;
    for (int i = 0; i < 100; ++i) {
        const int x = int(rng() % 32), y = int(rng() % 32);
        if (!mono.valid(x, y)) mono.set(x, y, uni(rng));
        const double s = 1.7 * mono.at(x, y) - 0.4 + noise(rng);
        samples.samples.push_back({x, y, std::max(s, 0.05)});
    }
    for (const auto& s : samples.samples) {
        dvals.push_back(mono.at(s.u, s.v));
        svals.push_back(s.depth);
    }

    const AffineDepthFit fit = align_depth(mono, samples);
    const auto [oa, ob] = normal_equation_oracle(dvals, svals);
    CHECK(fit.scale == doctest::Approx(oa).epsilon(1e-9));
    CHECK(fit.shift == doctest::Approx(ob).epsilon(1e-9));

    SUBCASE("objective is at a local minimum under +-1e-3 perturbations") {
        const auto objective = [&](double a, double b) {
            double sum = 0.0;
            for (size_t i = 0; i < dvals.size(); ++i) {
                const double r = a * dvals[i] + b - svals[i];
                sum += r * r;
            }
            return sum;
        };
        const double at_fit = objective(fit.scale, fit.shift);
        for (auto [da, db] : {std::pair{1e-3, 0.0}, {-1e-3, 0.0}, {0.0, 1e-3}, {0.0, -1e-3},
                              {1e-3, 1e-3}, {-1e-3, -1e-3}, {1e-3, -1e-3}, {-1e-3, 1e-3}})
            CHECK(objective(fit.scale + da, fit.shift + db) >= at_fit);
    }
}

TEST_CASE("align_depth rejects degenerate and undersized sample sets") {
    DepthMap mono = constant_depth(8, 8, 2.0);
    SparseDepthSamples constant;
    for (int i = 0; i < 5; ++i) constant.samples.push_back({i, i, 1.0 + i});
    CHECK_THROWS_AS(align_depth(mono, constant), ValidationError); // all mono depths equal

    DepthMap varied{8, 8};
    varied.set(0, 0, 1.0);
    varied.set(1, 1, 2.0);
    SparseDepthSamples one;
    one.samples.push_back({0, 0, 1.0});
    CHECK_THROWS_AS(align_depth(varied, one), ValidationError);
}

TEST_CASE("apply_affine transforms values and invalidates non-positive results") {
    DepthMap d = constant_depth(4, 3, 1.0);
    const DepthMap same = apply_affine(d, {1.0, 0.0, 0.0, 2});
    CHECK(same.values == d.values);
    CHECK(same.validity == d.validity);

    const DepthMap scaled = apply_affine(d, {2.0, 3.0, 0.0, 2});
    CHECK(scaled.at(1, 1) == doctest::Approx(5.0));

    const DepthMap negated = apply_affine(d, {1.0, -10.0, 0.0, 2});
    CHECK(negated.valid_count() == 0);
}

TEST_CASE("normal_from_depth: fronto-parallel plane gives (0,0,-1)") {
    const CameraView cam = simple_camera(24, 20);
    const DepthMap d = constant_depth(24, 20, 2.5);
    const NormalMap n = normal_from_depth(d, cam);
    size_t valid = 0;
    double worst = 0.0;
    for (int y = 1; y < 19; ++y)
        for (int x = 1; x < 23; ++x) {
            REQUIRE(n.valid(x, y));
            worst = std::max(worst, (n.at(x, y) - Vec3(0, 0, -1)).norm());
            ++valid;
        }
    CHECK(worst <= 1e-9);
    CHECK(valid == size_t(22 * 18));
    CHECK(!n.valid(0, 0)); // border ring invalid
}

TEST_CASE("normal_from_depth: 45-degree slanted plane matches the analytic normal") {
    // Plane z = z0 + x in camera space: depth(u) = z0 / (1 - (u-cx)/fx).
    const CameraView cam = simple_camera(40, 30, 2.0);
    const double z0 = 3.0;
    DepthMap d{40, 30};
    for (int y = 0; y < 30; ++y)
        for (int x = 0; x < 40; ++x) {
            const double denom = 1.0 - (x - cam.cx) / cam.fx;
            d.set(x, y, z0 / denom);
        }
    const NormalMap n = normal_from_depth(d, cam);
    const Vec3 expect = Vec3(1, 0, -1).normalized();
    double worst_deg = 0.0;
    for (int y = 2; y < 28; ++y)
        for (int x = 2; x < 38; ++x) {
            REQUIRE(n.valid(x, y));
            const double cosv = std::clamp(n.at(x, y).dot(expect), -1.0, 1.0);
            worst_deg = std::max(worst_deg, std::acos(cosv) * 180.0 / M_PI);
        }
    CHECK(worst_deg < 0.5);
    // x and z components have equal magnitude on a 45-degree slant.
    const Vec3 sample = n.at(20, 15);
    CHECK(std::abs(sample[0]) == doctest::Approx(std::abs(sample[2])).epsilon(1e-6));
}

TEST_CASE("normal_from_depth: isolated pixel is invalid") {
    const CameraView cam = simple_camera(9, 9);
    DepthMap d{9, 9};
    d.set(4, 4, 2.0);
    const NormalMap n = normal_from_depth(d, cam);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 9; ++x) REQUIRE(!n.valid(x, y));
}

TEST_CASE("normal_from_depth_vjp matches finite differences through a cosine loss") {
    const CameraView cam = simple_camera(16, 14);
    DepthMap d{16, 14};
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> uni(1.8, 2.2);
    for (int y = 0; y < 14; ++y)
        for (int x = 0; x < 16; ++x) d.set(x, y, uni(rng));

    const NormalMap base = normal_from_depth(d, cam);
    const Vec3 target = Vec3(0.2, -0.3, -1.0).normalized();
    const auto loss = [&](const DepthMap& dd) {
        const NormalMap n = normal_from_depth(dd, cam);
        double sum = 0.0;
        for (int y = 0; y < 14; ++y)
            for (int x = 0; x < 16; ++x)
                if (n.valid(x, y)) sum += 1.0 - n.at(x, y).dot(target);
        return sum;
    };

    std::vector<double> g_normal(size_t(16) * 14 * 3, 0.0);
    for (int y = 0; y < 14; ++y)
        for (int x = 0; x < 16; ++x)
            if (base.valid(x, y)) {
                const size_t i = (size_t(y) * 16 + x) * 3;
                g_normal[i] = -target[0];
                g_normal[i + 1] = -target[1];
                g_normal[i + 2] = -target[2];
            }
    Plane g_depth(16, 14);
    normal_from_depth_vjp(d, cam, g_normal, g_depth);

    size_t failures = 0;
    for (int y = 3; y < 11; ++y) {
        for (int x = 3; x < 13; ++x) {
            DepthMap dp = d;
            const double h = 1e-6;
            dp.set(x, y, d.at(x, y) + h);
            const double up = loss(dp);
            dp.set(x, y, d.at(x, y) - h);
            const double down = loss(dp);
            const double fd = (up - down) / (2.0 * h);
            const double a = g_depth.at(x, y);
            if (std::abs(a - fd) > std::max(1e-4 * std::max(std::abs(a), std::abs(fd)), 1e-8))
                ++failures;
        }
    }
    CHECK(failures == 0);
}

TEST_CASE("bilateral_filter leaves constant images unchanged and stays convex") {
    const CameraView cam = simple_camera(20, 16);
    const DepthMap d = constant_depth(20, 16, 2.0);
    const NormalMap n = normal_from_depth(d, cam);

    ImageBuffer flat(20, 16, Vec3(0.3, 0.6, 0.9));
    const ImageBuffer out = bilateral_filter(flat, d, n);
    double worst = 0.0;
    for (size_t i = 0; i < out.pixels.size(); ++i)
        worst = std::max(worst, std::abs(out.pixels[i] - flat.pixels[i]));
    CHECK(worst <= 1e-12);

    // Convex-combination property on a textured image: every output pixel
    // lies within the min/max of its window.
    const ImageBuffer tex = random_image(20, 16, 31);
    BilateralParams p;
    const ImageBuffer filtered = bilateral_filter(tex, d, n, p);
    bool inside = true;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 20; ++x)
            for (int c = 0; c < 3; ++c) {
                double lo = 1e300, hi = -1e300;
                for (int dy = -p.radius; dy <= p.radius; ++dy)
                    for (int dx = -p.radius; dx <= p.radius; ++dx) {
                        const int xx = x + dx, yy = y + dy;
                        if (xx < 0 || xx >= 20 || yy < 0 || yy >= 16) continue;
                        lo = std::min(lo, tex.at(xx, yy, c));
                        hi = std::max(hi, tex.at(xx, yy, c));
                    }
                inside &= filtered.at(x, y, c) >= lo - 1e-12 && filtered.at(x, y, c) <= hi + 1e-12;
            }
    CHECK(inside);
}

TEST_CASE("bilateral_filter reduces variance on a textured constant-geometry plane") {
    const CameraView cam = simple_camera(32, 24);
    const DepthMap d = constant_depth(32, 24, 2.0);
    const NormalMap n = normal_from_depth(d, cam);
    const ImageBuffer tex = random_image(32, 24, 77, 0.2, 0.8);

    BilateralParams p;
    p.sigma_color = 5.0; // large color sigma: nearly pure smoothing
    const ImageBuffer out = bilateral_filter(tex, d, n, p);

    const auto variance = [](const ImageBuffer& img) {
        double mean = 0.0;
        for (double v : img.pixels) mean += v;
        mean /= double(img.pixels.size());
        double var = 0.0;
        for (double v : img.pixels) var += (v - mean) * (v - mean);
        return var / double(img.pixels.size());
    };
    CHECK(variance(out) < variance(tex));
}

TEST_CASE("bilateral_filter does not bleed across a depth step") {
    const CameraView cam = simple_camera(24, 16);
    DepthMap d{24, 16};
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 24; ++x) d.set(x, y, x < 12 ? 1.0 : 3.0);
    const NormalMap n = normal_from_depth(d, cam);

    BilateralParams p;
    p.depth_sigma_fraction = 0.02; // sigma = 0.04 against a gap of 2.0
    // Direct weight evaluation across the step.
    const double sigma_depth = p.depth_sigma_fraction * (3.0 - 1.0);
    const double gap = 2.0;
    const double cross_weight = std::exp(-gap * gap / (2.0 * sigma_depth * sigma_depth));
    CHECK(cross_weight < 1e-6);

    // Two flat-colored regions stay flat after filtering.
    ImageBuffer img(24, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 24; ++x)
            img.set_rgb(x, y, x < 12 ? Vec3(0.9, 0.1, 0.1) : Vec3(0.1, 0.1, 0.9));
    const ImageBuffer out = bilateral_filter(img, d, n, p);
    double worst = 0.0;
    for (int y = 2; y < 14; ++y)
        for (int x = 0; x < 24; ++x)
            for (int c = 0; c < 3; ++c)
                worst = std::max(worst, std::abs(out.at(x, y, c) - img.at(x, y, c)));
    CHECK(worst <= 1e-6);
}
