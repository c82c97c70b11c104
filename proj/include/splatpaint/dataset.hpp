#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splatpaint/camera.hpp"
#include "splatpaint/gaussian.hpp"
#include "splatpaint/image.hpp"

namespace splat {

// Sparse metric depth anchors, e.g. triangulated feature points.
struct SparseDepthSample {
    int u = 0;
    int v = 0;
    double depth = 0.0;
};

struct SparseDepthSamples {
    std::vector<SparseDepthSample> samples;
    size_t size() const { return samples.size(); }
};

// One view: image (original or inpainted depending on load mode), inpaint
// mask, estimated depth (aligned in place by prepare_views), derived normals,
// and sparse depth anchors.
struct ViewRecord {
    CameraView cam;
    ImageBuffer image;
    MaskImage mask;
    DepthMap depth_mono;   // aligned estimated depth after prepare_views
    NormalMap normal_mono; // derived from depth_mono after prepare_views
    SparseDepthSamples sparse;
};

struct SceneDataset {
    std::vector<ViewRecord> views;
    int reference_view_id = 0;

    // Ground-truth background renders/depths (present for synthetic scenes).
    std::vector<ImageBuffer> gt_images;
    std::vector<DepthMap> gt_depths;
    bool has_ground_truth() const { return !gt_images.empty(); }

    const ViewRecord& reference() const { return views[size_t(reference_view_id)]; }
    void validate() const;
};

// Which per-view image file populates ViewRecord::image.
enum class ImageKind {
    Original, // view_<k>/image.png — object still present
    Inpainted // view_<k>/inpainted.png — per-view pseudo-inpainting
};

// Directory layout:
//   cameras.json                 — intrinsics/extrinsics per view + reference_view_id
//   view_<k>/image.png           — 8-bit RGB
//   view_<k>/mask.png            — 8-bit, 255 = inpaint region
//   view_<k>/depth.f32           — binary float32 depth, see depth_io
//   view_<k>/sparse.json         — list of [u, v, depth]
//   view_<k>/inpainted.png       — optional, required for ImageKind::Inpainted
//   gt/view_<k>.png, gt/depth_<k>.f32 — optional ground truth
SceneDataset load_dataset(const std::filesystem::path& dir, ImageKind kind = ImageKind::Original);
void save_dataset(const SceneDataset& ds, const std::filesystem::path& dir,
                  const std::vector<ImageBuffer>* inpainted = nullptr);

// Parses cameras.json alone (used by the render command).
std::vector<CameraView> load_cameras(const std::filesystem::path& path, int* reference_view_id);

// Gaussian checkpoint (scene.gsbin): versioned magic header followed by a
// flat float64 table; round-trips bit-exactly.
void save_gaussians(const std::vector<Gaussian3D>& gaussians, const std::filesystem::path& path);
std::vector<Gaussian3D> load_gaussians(const std::filesystem::path& path);

// Binary depth file: magic "DEPF", uint32 width, uint32 height, then
// width*height little-endian float32 values; non-positive = invalid.
void save_depth(const DepthMap& d, const std::filesystem::path& path);
DepthMap load_depth(const std::filesystem::path& path);

std::string view_dir_name(int index);

} // namespace splat
