// Kernel benchmark: OpenMP-parallel paths against their serial references.

#ifdef _OPENMP
#include <omp.h>
#endif

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "splatpaint/depth_ops.hpp"
#include "splatpaint/render.hpp"
#include "splatpaint/synth.hpp"

using namespace splat;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Gaussian3D> random_scene(int count, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<Gaussian3D> gs(count);
    for (Gaussian3D& g : gs) {
        g.position = Vec3(uni(rng) * 1.5, uni(rng) * 1.0, uni(rng) * 0.5);
        g.rotation = Vec4(1.0, 0.2 * uni(rng), 0.2 * uni(rng), 0.2 * uni(rng));
        g.normalize_rotation();
        g.log_scale = Vec3::Constant(std::log(0.05 + 0.03 * std::abs(uni(rng))));
        g.opacity_logit = logit(0.3 + 0.4 * std::abs(uni(rng)));
        g.color = Vec3(0.5 + 0.5 * uni(rng), 0.5 + 0.5 * uni(rng), 0.5 + 0.5 * uni(rng)).cwiseAbs();
    }
    return gs;
}

CameraView face_on_camera(int w, int h) {
    CameraView cam;
    cam.width = w;
    cam.height = h;
    cam.fx = cam.fy = 0.9 * w;
    cam.cx = 0.5 * (w - 1);
    cam.cy = 0.5 * (h - 1);
    cam.translation = Vec3(0, 0, 4.0);
    return cam;
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, ms_since(t0));
    }
    return best;
}

} // namespace

int main(int argc, char** argv) {
    const int gaussians = argc > 1 ? std::atoi(argv[1]) : 4000;
    const int width = argc > 2 ? std::atoi(argv[2]) : 320;
    const int height = argc > 3 ? std::atoi(argv[3]) : 240;
    const int reps = 3;

    const auto gs = random_scene(gaussians, 7);
    const CameraView cam = face_on_camera(width, height);
    const RenderSettings settings;

#ifdef _OPENMP
    const int max_threads = omp_get_max_threads();
#else
    const int max_threads = 1;
#endif
    std::printf("scene: %d gaussians, %dx%d, best of %d, %d thread(s)\n", gaussians, width, height,
                reps, max_threads);

    const double t_ref = time_best_of(reps, [&] { render_reference(gs, cam, settings); });
    const double t_tiled = time_best_of(reps, [&] { render(gs, cam, settings); });
    std::printf("%-28s %9.2f ms\n", "render_reference (serial)", t_ref);
    std::printf("%-28s %9.2f ms   speedup %.2fx\n", "render (tiled, OpenMP)", t_tiled, t_ref / t_tiled);

    const RenderOutput out = render(gs, cam, settings);
    PixelGrads pg(width, height);
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (double& v : pg.d_color) v = uni(rng);
    for (size_t i = 0; i < pg.d_depth.size(); ++i)
        if (out.depth.validity[i]) pg.d_depth[i] = uni(rng);
    const double t_back =
        time_best_of(reps, [&] { render_with_gradients(gs, cam, pg, settings); });
    std::printf("%-28s %9.2f ms\n", "render_with_gradients", t_back);

    ImageBuffer img(width, height);
    for (double& v : img.pixels) v = 0.5 + 0.4 * uni(rng);
    const NormalMap normals = normal_from_depth(out.depth, cam);
    const double t_bil =
        time_best_of(reps, [&] { bilateral_filter(img, out.depth, normals, BilateralParams{}); });
    std::printf("%-28s %9.2f ms\n", "bilateral_filter (OpenMP)", t_bil);
    return 0;
}
