#include "splatpaint/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

#include "splatpaint/png_io.hpp"

namespace splat {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr char kDepthMagic[4] = {'D', 'E', 'P', 'F'};
constexpr char kGaussianMagic[4] = {'G', 'S', 'B', 'N'};
constexpr uint32_t kGaussianVersion = 1;

json load_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("missing file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("bad json in " + path.string() + ": " + e.what());
    }
    return j;
}

template <typename T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError(std::string("truncated record reading ") + what);
    return v;
}

} // namespace

std::string view_dir_name(int index) {
    return "view_" + std::to_string(index);
}

void save_depth(const DepthMap& d, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open for writing: " + path.string());
    out.write(kDepthMagic, 4);
    write_raw(out, uint32_t(d.width));
    write_raw(out, uint32_t(d.height));
    for (size_t i = 0; i < d.values.size(); ++i) {
        const float v = d.validity[i] ? float(d.values[i]) : 0.0f;
        write_raw(out, v);
    }
    if (!out) throw ValidationError("write failed: " + path.string());
}

DepthMap load_depth(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("missing file: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kDepthMagic, 4) != 0)
        throw FormatError("bad depth file magic: " + path.string());
    const auto w = read_raw<uint32_t>(in, "depth header");
    const auto h = read_raw<uint32_t>(in, "depth header");
    if (w == 0 || h == 0 || w > 1u << 16 || h > 1u << 16)
        throw FormatError("implausible depth dimensions in " + path.string());
    DepthMap d{int(w), int(h)};
    for (size_t i = 0; i < d.values.size(); ++i) {
        const float v = read_raw<float>(in, "depth values");
        if (v > 0.0f && std::isfinite(v)) {
            d.values[i] = v;
            d.validity[i] = 1;
        }
    }
    return d;
}

void save_gaussians(const std::vector<Gaussian3D>& gaussians, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open for writing: " + path.string());
    out.write(kGaussianMagic, 4);
    write_raw(out, kGaussianVersion);
    write_raw(out, uint64_t(gaussians.size()));
    for (const Gaussian3D& g : gaussians) {
        for (int i = 0; i < 3; ++i) write_raw(out, g.position[i]);
        for (int i = 0; i < 4; ++i) write_raw(out, g.rotation[i]);
        for (int i = 0; i < 3; ++i) write_raw(out, g.log_scale[i]);
        write_raw(out, g.opacity_logit);
        for (int i = 0; i < 3; ++i) write_raw(out, g.color[i]);
    }
    if (!out) throw ValidationError("write failed: " + path.string());
}

std::vector<Gaussian3D> load_gaussians(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("missing file: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kGaussianMagic, 4) != 0)
        throw FormatError("bad gaussian checkpoint magic: " + path.string());
    const auto version = read_raw<uint32_t>(in, "checkpoint header");
    if (version != kGaussianVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto count = read_raw<uint64_t>(in, "checkpoint header");
    std::vector<Gaussian3D> gaussians(count);
    for (Gaussian3D& g : gaussians) {
        for (int i = 0; i < 3; ++i) g.position[i] = read_raw<double>(in, "gaussian record");
        for (int i = 0; i < 4; ++i) g.rotation[i] = read_raw<double>(in, "gaussian record");
        for (int i = 0; i < 3; ++i) g.log_scale[i] = read_raw<double>(in, "gaussian record");
        g.opacity_logit = read_raw<double>(in, "gaussian record");
        for (int i = 0; i < 3; ++i) g.color[i] = read_raw<double>(in, "gaussian record");
    }
    return gaussians;
}

void SceneDataset::validate() const {
    if (views.empty()) throw ValidationError("dataset has no views");
    if (reference_view_id < 0 || size_t(reference_view_id) >= views.size())
        throw ValidationError("reference_view_id " + std::to_string(reference_view_id) +
                              " out of range for " + std::to_string(views.size()) + " views");
    for (size_t k = 0; k < views.size(); ++k) {
        const ViewRecord& v = views[k];
        const std::string tag = "view " + std::to_string(k);
        v.cam.validate();
        if (v.image.width != v.cam.width || v.image.height != v.cam.height)
            throw ValidationError(tag + ": image dimensions do not match camera");
        require_same_dims(v.image.width, v.image.height, v.mask.width, v.mask.height,
                          (tag + " mask").c_str());
        require_same_dims(v.image.width, v.image.height, v.depth_mono.width, v.depth_mono.height,
                          (tag + " depth").c_str());
        for (const SparseDepthSample& s : v.sparse.samples) {
            if (s.u < 0 || s.u >= v.image.width || s.v < 0 || s.v >= v.image.height)
                throw ValidationError(tag + ": sparse sample out of bounds");
            if (!(s.depth > 0.0) || !std::isfinite(s.depth))
                throw ValidationError(tag + ": sparse sample has non-positive depth");
        }
        for (double p : v.image.pixels)
            if (!std::isfinite(p)) throw ValidationError(tag + ": non-finite image value");
        for (size_t i = 0; i < v.depth_mono.values.size(); ++i)
            if (v.depth_mono.validity[i] &&
                (!(v.depth_mono.values[i] > 0.0) || !std::isfinite(v.depth_mono.values[i])))
                throw ValidationError(tag + ": invalid depth marked valid");
    }
    if (!gt_images.empty() && gt_images.size() != views.size())
        throw ValidationError("ground-truth image count does not match view count");
}

std::vector<CameraView> load_cameras(const fs::path& path, int* reference_view_id) {
    const json cams = load_json_file(path);
    if (!cams.contains("views") || !cams["views"].is_array())
        throw FormatError("cameras.json: missing views array");
    if (reference_view_id) *reference_view_id = cams.value("reference_view_id", 0);

    std::vector<CameraView> out;
    int index = 0;
    for (const json& jc : cams["views"]) {
        CameraView cam;
        try {
            cam.fx = jc.at("fx").get<double>();
            cam.fy = jc.at("fy").get<double>();
            cam.cx = jc.at("cx").get<double>();
            cam.cy = jc.at("cy").get<double>();
            cam.width = jc.at("width").get<int>();
            cam.height = jc.at("height").get<int>();
            const auto rot = jc.at("rotation").get<std::vector<double>>();
            const auto tr = jc.at("translation").get<std::vector<double>>();
            if (rot.size() != 9 || tr.size() != 3)
                throw FormatError("cameras.json: rotation/translation of view " +
                                  std::to_string(index) + " has wrong arity");
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot[size_t(r) * 3 + c];
            for (int i = 0; i < 3; ++i) cam.translation[i] = tr[i];
        } catch (const json::exception& e) {
            throw FormatError("cameras.json: view " + std::to_string(index) + ": " + e.what());
        }
        out.push_back(cam);
        ++index;
    }
    return out;
}

SceneDataset load_dataset(const fs::path& dir, ImageKind kind) {
    SceneDataset ds;
    const std::vector<CameraView> cams = load_cameras(dir / "cameras.json", &ds.reference_view_id);

    int index = 0;
    for (const CameraView& cam : cams) {
        ViewRecord v;
        v.cam = cam;

        const fs::path vdir = dir / view_dir_name(index);
        const fs::path image_file =
            kind == ImageKind::Inpainted ? vdir / "inpainted.png" : vdir / "image.png";
        if (kind == ImageKind::Inpainted && !fs::exists(image_file))
            throw ValidationError("view " + std::to_string(index) +
                                  ": no inpainted image (expected " + image_file.string() + ")");
        v.image = load_png_rgb(image_file);
        v.mask = load_png_mask(vdir / "mask.png");
        v.depth_mono = load_depth(vdir / "depth.f32");

        const json sparse = load_json_file(vdir / "sparse.json");
        for (const json& js : sparse) {
            if (!js.is_array() || js.size() != 3)
                throw FormatError("sparse.json of view " + std::to_string(index) +
                                  ": entries must be [u, v, depth]");
            v.sparse.samples.push_back({js[0].get<int>(), js[1].get<int>(), js[2].get<double>()});
        }
        ds.views.push_back(std::move(v));
        ++index;
    }

    // Optional ground truth.
    const fs::path gt = dir / "gt";
    if (fs::exists(gt)) {
        for (size_t k = 0; k < ds.views.size(); ++k) {
            ds.gt_images.push_back(load_png_rgb(gt / ("view_" + std::to_string(k) + ".png")));
            ds.gt_depths.push_back(load_depth(gt / ("depth_" + std::to_string(k) + ".f32")));
        }
    }

    ds.validate();
    return ds;
}

void save_dataset(const SceneDataset& ds, const fs::path& dir, const std::vector<ImageBuffer>* inpainted) {
    fs::create_directories(dir);
    json views = json::array();
    for (const ViewRecord& v : ds.views) {
        json jc;
        jc["fx"] = v.cam.fx;
        jc["fy"] = v.cam.fy;
        jc["cx"] = v.cam.cx;
        jc["cy"] = v.cam.cy;
        jc["width"] = v.cam.width;
        jc["height"] = v.cam.height;
        std::vector<double> rot(9), tr(3);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) rot[size_t(r) * 3 + c] = v.cam.rotation(r, c);
        for (int i = 0; i < 3; ++i) tr[i] = v.cam.translation[i];
        jc["rotation"] = rot;
        jc["translation"] = tr;
        views.push_back(jc);
    }
    json root;
    root["views"] = views;
    root["reference_view_id"] = ds.reference_view_id;
    std::ofstream out(dir / "cameras.json");
    out << root.dump(2) << "\n";

    for (size_t k = 0; k < ds.views.size(); ++k) {
        const ViewRecord& v = ds.views[k];
        const fs::path vdir = dir / view_dir_name(int(k));
        fs::create_directories(vdir);
        save_png_rgb(v.image, vdir / "image.png");
        save_png_mask(v.mask, vdir / "mask.png");
        save_depth(v.depth_mono, vdir / "depth.f32");
        json sparse = json::array();
        for (const SparseDepthSample& s : v.sparse.samples)
            sparse.push_back(json::array({s.u, s.v, s.depth}));
        std::ofstream sout(vdir / "sparse.json");
        sout << sparse.dump() << "\n";
        if (inpainted) save_png_rgb((*inpainted)[k], vdir / "inpainted.png");
    }

    if (ds.has_ground_truth()) {
        const fs::path gt = dir / "gt";
        fs::create_directories(gt);
        for (size_t k = 0; k < ds.views.size(); ++k) {
            save_png_rgb(ds.gt_images[k], gt / ("view_" + std::to_string(k) + ".png"));
            save_depth(ds.gt_depths[k], gt / ("depth_" + std::to_string(k) + ".f32"));
        }
    }
}

} // namespace splat
