#include "splatpaint/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace splat {
namespace {

using nlohmann::json;

// --- deterministic hashing ---------------------------------------------

uint32_t hash_u32(uint32_t x) {
    x ^= x >> 16;
    x *= 0x7feb352dU;
    x ^= x >> 15;
    x *= 0x846ca68bU;
    x ^= x >> 16;
    return x;
}

uint32_t hash_combine(uint32_t a, uint32_t b) { return hash_u32(a ^ (b + 0x9e3779b9U + (a << 6) + (a >> 2))); }

// Uniform [0,1) from a chain of seeds.
double hash_unit(std::initializer_list<uint32_t> seeds) {
    uint32_t h = 0x811c9dc5U;
    for (uint32_t s : seeds) h = hash_combine(h, s);
    return double(h) / 4294967296.0;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Lattice value noise in [0,1].
double value_noise(uint32_t seed, uint32_t channel, double x, double y) {
    const int xi = int(std::floor(x)), yi = int(std::floor(y));
    const double fx = smoothstep(x - xi), fy = smoothstep(y - yi);
    const auto lattice = [&](int ix, int iy) {
        return hash_unit({seed, channel, uint32_t(ix + 0x4000), uint32_t(iy + 0x4000)});
    };
    const double v00 = lattice(xi, yi), v10 = lattice(xi + 1, yi);
    const double v01 = lattice(xi, yi + 1), v11 = lattice(xi + 1, yi + 1);
    return (v00 * (1 - fx) + v10 * fx) * (1 - fy) + (v01 * (1 - fx) + v11 * fx) * fy;
}

double octave_noise(uint32_t seed, uint32_t channel, double x, double y, int octaves) {
    double sum = 0.0, amp = 1.0, norm = 0.0, f = 1.0;
    for (int o = 0; o < octaves; ++o) {
        sum += amp * value_noise(seed, channel + uint32_t(o) * 131u, x * f, y * f);
        norm += amp;
        amp *= 0.55;
        f *= 2.1;
    }
    return sum / norm;
}

// --- procedural textures -------------------------------------------------

// Base colors chosen with distinct luminances so semantic swaps are easy to
// tell apart even after strong smoothing.
const Vec3 kPalette[8] = {
    {0.82, 0.71, 0.48}, {0.35, 0.52, 0.70}, {0.62, 0.30, 0.32}, {0.28, 0.60, 0.40},
    {0.85, 0.83, 0.78}, {0.26, 0.26, 0.34}, {0.73, 0.55, 0.75}, {0.47, 0.42, 0.24},
};

Vec3 texture_color(uint32_t seed, uint32_t id, double complexity, double u, double v) {
    const Vec3 base = kPalette[id % 8];
    const double freq = 2.0 + 6.0 * complexity;
    const double n = octave_noise(seed, id * 977u + 13u, u * freq, v * freq, 3);
    const double stripe_k = 1.5 + double(id % 5);
    const double phase = hash_unit({seed, id, 55u});
    const double stripes = 0.5 + 0.5 * std::sin(2.0 * M_PI * (u * stripe_k + phase));
    const double check_k = 1.0 + double(id % 3);
    const int par = int(std::floor(u * check_k)) + int(std::floor(v * check_k));
    const double checker = (par & 1) ? 0.25 : 0.75;

    const double w_stripe = 0.35 * complexity;
    const double w_check = 0.25 * complexity;
    const double w_noise = 1.0 - w_stripe - w_check;
    const double field = w_noise * n + w_stripe * stripes + w_check * checker;
    Vec3 c = base * (0.55 + 0.6 * field);
    for (int k = 0; k < 3; ++k) c[k] = std::clamp(c[k], 0.04, 0.98);
    return c;
}

// --- analytic geometry ----------------------------------------------------

struct Rect3 {
    Vec3 center, axis_u, axis_v; // unit, orthogonal
    double half_u = 0, half_v = 0;
    uint32_t texture_id = 0;
    double texture_scale = 1.0;
};

struct Box3 {
    Vec3 center, half;
    uint32_t texture_id = 0;
    double texture_scale = 1.0;
};

struct Hit {
    double t = -1.0; // camera-space depth (rays carry unit camera z)
    Vec3 color = Vec3::Zero();
    bool occluder = false;
    bool valid() const { return t > 0.0; }
};

struct Scene {
    std::vector<Rect3> rects;
    std::optional<Box3> occluder;
    uint32_t seed = 0;
    double complexity = 0.5;
};

void intersect_rect(const Scene& sc, const Rect3& r, const Vec3& origin, const Vec3& dir, Hit& best) {
    const Vec3 n = r.axis_u.cross(r.axis_v);
    const double denom = dir.dot(n);
    if (std::abs(denom) < 1e-12) return;
    const double t = (r.center - origin).dot(n) / denom;
    if (t <= 1e-9 || (best.valid() && t >= best.t)) return;
    const Vec3 h = origin + t * dir - r.center;
    const double a = h.dot(r.axis_u), b = h.dot(r.axis_v);
    if (std::abs(a) > r.half_u || std::abs(b) > r.half_v) return;
    best.t = t;
    best.occluder = false;
    best.color = texture_color(sc.seed, r.texture_id, sc.complexity, a * r.texture_scale,
                               b * r.texture_scale);
}

void intersect_box(const Scene& sc, const Box3& b, const Vec3& origin, const Vec3& dir, Hit& best) {
    double t0 = -1e300, t1 = 1e300;
    int axis0 = -1;
    for (int k = 0; k < 3; ++k) {
        const double lo = b.center[k] - b.half[k], hi = b.center[k] + b.half[k];
        if (std::abs(dir[k]) < 1e-12) {
            if (origin[k] < lo || origin[k] > hi) return;
            continue;
        }
        double ta = (lo - origin[k]) / dir[k];
        double tb = (hi - origin[k]) / dir[k];
        if (ta > tb) std::swap(ta, tb);
        if (ta > t0) {
            t0 = ta;
            axis0 = k;
        }
        t1 = std::min(t1, tb);
        if (t0 > t1) return;
    }
    if (t0 <= 1e-9 || (best.valid() && t0 >= best.t)) return;
    const Vec3 h = origin + t0 * dir - b.center;
    const int ua = (axis0 + 1) % 3, va = (axis0 + 2) % 3;
    best.t = t0;
    best.occluder = true;
    best.color =
        texture_color(sc.seed, b.texture_id, sc.complexity, h[ua] * b.texture_scale, h[va] * b.texture_scale);
}

Hit cast_ray(const Scene& sc, const Vec3& origin, const Vec3& dir, bool with_occluder) {
    Hit best;
    for (const Rect3& r : sc.rects) intersect_rect(sc, r, origin, dir, best);
    if (with_occluder && sc.occluder) intersect_box(sc, *sc.occluder, origin, dir, best);
    return best;
}

const Vec3 kMissColor(0.18, 0.18, 0.2);

// Renders color and camera-space depth; mask marks occluder hits.
void render_view(const Scene& sc, const CameraView& cam, bool with_occluder, ImageBuffer& img,
                 DepthMap& depth, MaskImage* occluder_mask) {
    img = ImageBuffer(cam.width, cam.height);
    depth = DepthMap(cam.width, cam.height);
    if (occluder_mask) *occluder_mask = MaskImage(cam.width, cam.height);
    const Vec3 origin = cam.camera_center();
    const Mat3 rt = cam.rotation.transpose();
#pragma omp parallel for schedule(static)
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Vec3 dir = rt * cam.pixel_ray(x, y); // camera z component = 1
            const Hit h = cast_ray(sc, origin, dir, with_occluder);
            if (!h.valid()) {
                img.set_rgb(x, y, kMissColor);
                continue;
            }
            img.set_rgb(x, y, h.color);
            depth.set(x, y, h.t);
            if (occluder_mask && h.occluder) occluder_mask->set(x, y, true);
        }
    }
}

Scene build_scene(const SynthSpec& spec) {
    Scene sc;
    sc.seed = spec.seed;
    sc.complexity = spec.texture_complexity;
    // Background wall in the z=0 plane facing the cameras.
    sc.rects.push_back({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), spec.wall_half_width,
                        spec.wall_half_height, 0u, 0.9});
    if (spec.add_floor) {
        sc.rects.push_back({Vec3(0, -spec.wall_half_height, 0.5 * spec.ring_radius + 0.5),
                            Vec3(1, 0, 0), Vec3(0, 0, 1), spec.wall_half_width,
                            0.5 * spec.ring_radius + 0.5, 1u, 0.9});
    }
    if (spec.add_foreground_plane) {
        sc.rects.push_back({spec.foreground_center, Vec3(1, 0, 0), Vec3(0, 1, 0),
                            spec.foreground_half_size, spec.foreground_half_size, 2u, 2.2});
    }
    sc.occluder = Box3{spec.occluder_center, spec.occluder_half, 3u, 1.6};
    return sc;
}

CameraView ring_camera(const SynthSpec& spec, int k) {
    CameraView cam;
    cam.width = spec.width;
    cam.height = spec.height;
    cam.fx = cam.fy = spec.focal_factor * spec.width;
    cam.cx = 0.5 * (spec.width - 1);
    cam.cy = 0.5 * (spec.height - 1);

    const double arc = spec.ring_arc_deg * M_PI / 180.0;
    const double theta = spec.view_count > 1 ? (double(k) / (spec.view_count - 1) - 0.5) * arc : 0.0;
    const double phi = spec.ring_elevation_deg * M_PI / 180.0;
    const Vec3 pos(spec.ring_radius * std::sin(theta) * std::cos(phi),
                   spec.ring_radius * std::sin(phi),
                   spec.ring_radius * std::cos(theta) * std::cos(phi));

    const Vec3 target(0, 0, 0);
    const Vec3 up(0, 1, 0);
    const Vec3 z = (target - pos).normalized();
    const Vec3 x = z.cross(up).normalized();
    const Vec3 y = z.cross(x);
    cam.rotation.row(0) = x;
    cam.rotation.row(1) = y;
    cam.rotation.row(2) = z;
    cam.translation = -(cam.rotation * pos);
    return cam;
}

MaskImage dilate(const MaskImage& m, int r) {
    if (r <= 0) return m;
    MaskImage out(m.width, m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            bool any = false;
            for (int dy = -r; dy <= r && !any; ++dy)
                for (int dx = -r; dx <= r && !any; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if (m.in_bounds(xx, yy) && m.at(xx, yy)) any = true;
                }
            out.set(x, y, any);
        }
    return out;
}

double bilinear_sample(const ImageBuffer& img, double x, double y, int c) {
    x = std::clamp(x, 0.0, double(img.width - 1));
    y = std::clamp(y, 0.0, double(img.height - 1));
    const int x0 = std::min(int(x), img.width - 2 >= 0 ? img.width - 2 : 0);
    const int y0 = std::min(int(y), img.height - 2 >= 0 ? img.height - 2 : 0);
    const double fx = x - x0, fy = y - y0;
    const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    return (img.at(x0, y0, c) * (1 - fx) + img.at(x1, y0, c) * fx) * (1 - fy) +
           (img.at(x0, y1, c) * (1 - fx) + img.at(x1, y1, c) * fx) * fy;
}

} // namespace

void SynthSpec::validate() const {
    if (view_count < 3) throw ValidationError("synth spec: need at least 3 views");
    if (width < 32 || height < 32) throw ValidationError("synth spec: image too small");
    if (!(ring_radius > 0.0)) throw ValidationError("synth spec: ring radius must be positive");
    for (const auto* sched : {&color_shift, &jitter_px})
        if (sched->size() > 1 && sched->size() != size_t(view_count))
            throw ValidationError("synth spec: corruption schedule length must be 1 or view_count");
    if (semantic_swap.size() > 1 && semantic_swap.size() != size_t(view_count))
        throw ValidationError("synth spec: semantic_swap length must be 1 or view_count");
    if (reference_view_id < 0 || reference_view_id >= view_count)
        throw ValidationError("synth spec: reference view out of range");
    if (sparse_stride < 2) throw ValidationError("synth spec: sparse_stride must be >= 2");
}

double SynthSpec::corruption(const std::vector<double>& sched, int view) const {
    if (sched.empty()) return 0.0;
    return sched.size() == 1 ? sched[0] : sched[size_t(view)];
}

bool SynthSpec::swap_scheduled(int view) const {
    if (semantic_swap.empty()) return false;
    return (semantic_swap.size() == 1 ? semantic_swap[0] : semantic_swap[size_t(view)]) != 0;
}

DepthMap make_pseudo_mono_depth(const DepthMap& gt_depth, const SynthSpec& spec, int view) {
    DepthMap out(gt_depth.width, gt_depth.height);
    for (int y = 0; y < gt_depth.height; ++y) {
        for (int x = 0; x < gt_depth.width; ++x) {
            if (!gt_depth.valid(x, y)) continue;
            double v = spec.depth_scale * gt_depth.at(x, y) + spec.depth_shift;
            if (spec.depth_noise_sigma > 0.0) {
                const double n =
                    octave_noise(spec.seed ^ 0xd00dfeedU, uint32_t(view) * 71u, x / 16.0, y / 16.0, 2);
                v += spec.depth_noise_sigma * (2.0 * n - 1.0);
            }
            if (v > 0.0) out.set(x, y, v);
        }
    }
    return out;
}

std::vector<ImageBuffer> make_pseudo_inpaintings(const SceneDataset& dataset,
                                                 const std::vector<ImageBuffer>& gt_background,
                                                 const SynthSpec& spec) {
    std::vector<ImageBuffer> out;
    for (size_t k = 0; k < dataset.views.size(); ++k) {
        const MaskImage& mask = dataset.views[k].mask;
        ImageBuffer img = gt_background[k];

        if (spec.swap_scheduled(int(k))) {
            const uint32_t swap_id = 4u + uint32_t(k) % 4u;
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x)
                    if (mask.at(x, y))
                        img.set_rgb(x, y, texture_color(spec.seed ^ 0xabcdU, swap_id,
                                                        spec.texture_complexity, 5.0 * x / img.width,
                                                        5.0 * y / img.height));
        }

        const double jitter = spec.corruption(spec.jitter_px, int(k));
        if (jitter > 0.0) {
            const ImageBuffer base = img;
            const double ph1 = 2.0 * M_PI * hash_unit({spec.seed, uint32_t(k), 901u});
            const double ph2 = 2.0 * M_PI * hash_unit({spec.seed, uint32_t(k), 902u});
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) {
                    if (!mask.at(x, y)) continue;
                    const double sx = x + jitter * std::sin(2.0 * M_PI * y / 24.0 + ph1);
                    const double sy = y + jitter * std::sin(2.0 * M_PI * x / 24.0 + ph2);
                    for (int c = 0; c < 3; ++c) img.at(x, y, c) = bilinear_sample(base, sx, sy, c);
                }
        }

        const double shift = spec.corruption(spec.color_shift, int(k));
        if (shift != 0.0) {
            Vec3 dir;
            for (int c = 0; c < 3; ++c)
                dir[c] = 2.0 * hash_unit({spec.seed, uint32_t(k), 910u + uint32_t(c)}) - 1.0;
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) {
                    if (!mask.at(x, y)) continue;
                    for (int c = 0; c < 3; ++c)
                        img.at(x, y, c) = std::clamp(img.at(x, y, c) + shift * dir[c], 0.0, 1.0);
                }
        }
        out.push_back(std::move(img));
    }
    return out;
}

SynthResult generate_scene(const SynthSpec& spec) {
    spec.validate();
    const Scene sc = build_scene(spec);

    SynthResult res;
    res.dataset.reference_view_id = spec.reference_view_id;

    for (int k = 0; k < spec.view_count; ++k) {
        ViewRecord v;
        v.cam = ring_camera(spec, k);
        const Vec3 cpos = v.cam.camera_center();
        if (sc.occluder) {
            const Vec3 d = (cpos - sc.occluder->center).cwiseAbs();
            if (d[0] <= sc.occluder->half[0] && d[1] <= sc.occluder->half[1] &&
                d[2] <= sc.occluder->half[2])
                throw ValidationError("synth: camera " + std::to_string(k) + " inside the occluder");
        }

        DepthMap occluded_depth;
        MaskImage mask;
        render_view(sc, v.cam, true, v.image, occluded_depth, &mask);

        ImageBuffer gt_img;
        DepthMap gt_depth;
        render_view(sc, v.cam, false, gt_img, gt_depth, nullptr);

        if (mask.empty())
            throw ValidationError("synth: occluder not visible in view " + std::to_string(k));
        v.mask = dilate(mask, spec.mask_dilation_px);
        v.depth_mono = make_pseudo_mono_depth(gt_depth, spec, k);

        // Sparse anchors from GT depth on a jittered grid.
        for (int gy = spec.sparse_stride / 2; gy < spec.height; gy += spec.sparse_stride) {
            for (int gx = spec.sparse_stride / 2; gx < spec.width; gx += spec.sparse_stride) {
                const int jx = int((hash_unit({spec.seed, uint32_t(k), uint32_t(gx), uint32_t(gy), 1u}) - 0.5) *
                                   spec.sparse_stride * 0.6);
                const int jy = int((hash_unit({spec.seed, uint32_t(k), uint32_t(gx), uint32_t(gy), 2u}) - 0.5) *
                                   spec.sparse_stride * 0.6);
                const int x = std::clamp(gx + jx, 0, spec.width - 1);
                const int y = std::clamp(gy + jy, 0, spec.height - 1);
                if (!gt_depth.valid(x, y)) continue;
                v.sparse.samples.push_back({x, y, gt_depth.at(x, y)});
            }
        }

        res.dataset.views.push_back(std::move(v));
        res.dataset.gt_images.push_back(std::move(gt_img));
        res.dataset.gt_depths.push_back(std::move(gt_depth));
        res.occluded_depth.push_back(std::move(occluded_depth));
    }

    res.inpainted = make_pseudo_inpaintings(res.dataset, res.dataset.gt_images, spec);
    res.dataset.validate();
    return res;
}

void write_synth_dataset(const SynthResult& result, const std::filesystem::path& dir) {
    save_dataset(result.dataset, dir, &result.inpainted);
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void read_schedule(const json& j, const char* key, std::vector<double>& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (v.is_number())
        out = {v.get<double>()};
    else
        out = v.get<std::vector<double>>();
}

} // namespace

SynthSpec synth_spec_from_json(const std::string& text) {
    json j;
    SynthSpec s;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad synth spec json: ") + e.what());
    }
    try {
    read_field(j, "seed", s.seed);
    read_field(j, "width", s.width);
    read_field(j, "height", s.height);
    read_field(j, "views", s.view_count);
    read_field(j, "ring_radius", s.ring_radius);
    read_field(j, "ring_arc_deg", s.ring_arc_deg);
    read_field(j, "ring_elevation_deg", s.ring_elevation_deg);
    read_field(j, "focal_factor", s.focal_factor);
    read_field(j, "wall_half_width", s.wall_half_width);
    read_field(j, "wall_half_height", s.wall_half_height);
    read_field(j, "add_floor", s.add_floor);
    read_field(j, "add_foreground_plane", s.add_foreground_plane);
    read_field(j, "foreground_half_size", s.foreground_half_size);
    if (j.contains("foreground_center")) {
        const auto v = j.at("foreground_center").get<std::vector<double>>();
        if (v.size() != 3) throw FormatError("synth spec: foreground_center must have 3 entries");
        s.foreground_center = Vec3(v[0], v[1], v[2]);
    }
    if (j.contains("occluder_center")) {
        const auto v = j.at("occluder_center").get<std::vector<double>>();
        if (v.size() != 3) throw FormatError("synth spec: occluder_center must have 3 entries");
        s.occluder_center = Vec3(v[0], v[1], v[2]);
    }
    if (j.contains("occluder_half")) {
        const auto v = j.at("occluder_half").get<std::vector<double>>();
        if (v.size() != 3) throw FormatError("synth spec: occluder_half must have 3 entries");
        s.occluder_half = Vec3(v[0], v[1], v[2]);
    }
    read_field(j, "texture_complexity", s.texture_complexity);
    read_schedule(j, "color_shift", s.color_shift);
    read_schedule(j, "jitter_px", s.jitter_px);
    if (j.contains("semantic_swap")) {
        const json& v = j.at("semantic_swap");
        if (v.is_number())
            s.semantic_swap = {uint8_t(v.get<int>() != 0)};
        else
            for (const auto& e : v) s.semantic_swap.push_back(uint8_t(e.get<int>() != 0));
    }
    read_field(j, "depth_scale", s.depth_scale);
    read_field(j, "depth_shift", s.depth_shift);
    read_field(j, "depth_noise_sigma", s.depth_noise_sigma);
    read_field(j, "sparse_stride", s.sparse_stride);
    read_field(j, "reference_view_id", s.reference_view_id);
    read_field(j, "mask_dilation_px", s.mask_dilation_px);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad synth spec json: ") + e.what());
    }
    s.validate();
    return s;
}

SynthSpec synth_spec_from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("missing file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return synth_spec_from_json(text);
}

} // namespace splat
