#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "splatpaint/dataset.hpp"

namespace splat {

// Scene description for the analytic ray-cast oracle. The generator renders
// the scene twice per view (with and without the occluder), producing exact
// masks and depths; it never touches the splat renderer.
struct SynthSpec {
    unsigned seed = 1;
    int width = 128;
    int height = 96;
    int view_count = 5;

    // Cameras sit on a forward-facing arc looking at the origin.
    double ring_radius = 4.0;
    double ring_arc_deg = 50.0;
    double ring_elevation_deg = 8.0;
    double focal_factor = 0.9; // fx = fy = focal_factor * width

    // Background wall in the plane z=0 plus an optional floor.
    double wall_half_width = 3.2;
    double wall_half_height = 2.4;
    bool add_floor = true;

    // Optional second frontal plane (for two-layer warp scenes).
    bool add_foreground_plane = false;
    Vec3 foreground_center = Vec3(0.8, 0.0, 1.2);
    double foreground_half_size = 0.45;

    // Occluder box (axis-aligned).
    Vec3 occluder_center = Vec3(0.0, 0.0, 1.0);
    Vec3 occluder_half = Vec3(0.45, 0.45, 0.3);

    double texture_complexity = 0.5;

    // Per-view corruption schedules; scalars broadcast, arrays must match
    // view_count. Swap flags pick the views whose masked content is replaced
    // by a different texture.
    std::vector<double> color_shift;   // amplitude of a global color offset
    std::vector<double> jitter_px;     // smooth warp displacement amplitude
    std::vector<uint8_t> semantic_swap;

    // Pseudo-monocular depth corruption: a*gt + b + smooth noise.
    double depth_scale = 1.0;
    double depth_shift = 0.0;
    double depth_noise_sigma = 0.0;

    int sparse_stride = 9; // sparse sample grid step in pixels
    int reference_view_id = 0;
    int mask_dilation_px = 1;

    void validate() const;
    double corruption(const std::vector<double>& sched, int view) const;
    bool swap_scheduled(int view) const;
};

SynthSpec synth_spec_from_json_file(const std::filesystem::path& path);
SynthSpec synth_spec_from_json(const std::string& text);

struct SynthResult {
    SceneDataset dataset;                 // original images; depth = pseudo-mono
    std::vector<ImageBuffer> inpainted;   // per-view pseudo-inpaintings
    std::vector<DepthMap> occluded_depth; // depth of the scene with the occluder
};

// Renders the dataset: training images with the occluder, exact masks from
// occluder visibility, pseudo-mono depth, sparse samples from GT depth, plus
// GT background renders/depths and pseudo-inpaintings.
SynthResult generate_scene(const SynthSpec& spec);

// Corrupted per-view completions: GT background inside the mask with the
// scheduled color shift / geometric jitter / semantic swap applied; identical
// to the background render outside the mask.
std::vector<ImageBuffer> make_pseudo_inpaintings(const SceneDataset& dataset,
                                                 const std::vector<ImageBuffer>& gt_background,
                                                 const SynthSpec& spec);

// a*gt + b plus smooth low-frequency noise of amplitude sigma.
DepthMap make_pseudo_mono_depth(const DepthMap& gt_depth, const SynthSpec& spec, int view);

// Writes the dataset directory (including inpainted.png and gt/).
void write_synth_dataset(const SynthResult& result, const std::filesystem::path& dir);

} // namespace splat
