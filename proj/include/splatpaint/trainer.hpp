#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "splatpaint/adam.hpp"
#include "splatpaint/confidence.hpp"
#include "splatpaint/dataset.hpp"
#include "splatpaint/losses.hpp"
#include "splatpaint/render.hpp"
#include "splatpaint/warp.hpp"

namespace splat {

enum class WeightMode {
    Confidence, // w_inp = logistic(alpha*(conf-beta))
    Uniform,    // w_inp = 1 for every view
    Threshold   // w_inp = 1 if conf >= beta else 0
};

std::string to_string(WeightMode m);
WeightMode weight_mode_from_string(const std::string& s);

struct TrainConfig {
    // Loss weights (total = L_C + lambda_depth*L_D + lambda_normal*L_iN +
    // lambda_perceptual*L_iLPIPS).
    double lambda_ssim = 0.2;
    double lambda_depth = 0.5;
    double lambda_normal = 0.1;
    double lambda_perceptual = 0.5;

    // Stage lengths. Desk-scale scenes use ~2k/3k.
    int iterations_initial = 7000;
    int iterations_inpaint = 10000;

    AdamParams adam;

    // Densification / pruning schedule.
    int densify_interval = 200;
    int densify_start = 200;
    double densify_end_fraction = 0.6;   // of the stage length
    double densify_grad_threshold = 3e-5; // accumulated mean screen-space grad
    double densify_scale_fraction = 0.01; // of scene extent: clone below, split above
    double prune_opacity = 0.005;

    // Inpaint stage.
    double consistency_tau_fraction = 0.01; // of the reference's valid depth range
    double refresh_fraction = 0.1;          // confidence refresh interval
    ConfidenceParams confidence;
    int normal_patch_px = 32;
    int perceptual_patch_px = 64;
    double eval_patch_margin = 0.1;
    WeightMode weight_mode = WeightMode::Confidence;

    RenderSettings render;
    unsigned seed = 0;
    int log_every = 1;

    void validate() const; // throws ValidationError
};

TrainConfig train_config_from_json_file(const std::filesystem::path& path);
std::string train_config_to_json(const TrainConfig& c); // full echo, for logs

// Newline-delimited JSON training log. First record echoes the full config;
// then one record per logged iteration.
class TrainLog {
public:
    TrainLog() = default;
    explicit TrainLog(const std::filesystem::path& path, const TrainConfig& config);
    void record(int iteration, int view_id, double total, double l_color, double l_depth,
                double l_normal, double l_perceptual, size_t gaussian_count, double p_prime_fraction);
    bool enabled() const { return bool(out_); }

private:
    std::shared_ptr<std::ofstream> out_;
};

// Cached pseudo-ground-truth for one view during inpaint training.
struct WarpCache {
    ImageBuffer i_warp;
    MaskImage union_set;     // M^c ∪ warped region (color-loss domain)
    double p_prime_fraction = 0.0;
    bool valid = false;
};

struct TrainState {
    std::vector<Gaussian3D> gaussians;
    AdamState adam;
    int iteration = 0;
    double scene_extent = 1.0;
    std::mt19937 rng;
    std::vector<ConfidenceRecord> confidences;
    std::vector<WarpCache> warp_caches;
    // Densification statistics.
    std::vector<double> grad_accum;
    std::vector<int> grad_count;
    // Per-view depth re-aligned at each confidence refresh.
    std::vector<DepthMap> aligned_depth;
    std::vector<NormalMap> aligned_normal;
};

// Aligns every view's estimated depth to its sparse samples and derives
// normals; call once after load_dataset.
void prepare_views(SceneDataset& ds);

// Distance from the camera-center centroid to the farthest camera (vanilla
// scene extent heuristic); falls back to 1 for single-camera scenes.
double scene_extent(const SceneDataset& ds);

// Seed Gaussians by unprojecting every view's sparse depth samples.
std::vector<Gaussian3D> seed_gaussians(const SceneDataset& ds);

// Background-reconstruction stage: masked color loss + depth regularization
// over uniformly sampled views. Returns the optimized Gaussians.
std::vector<Gaussian3D> train_initial(const SceneDataset& ds, const TrainConfig& config,
                                      TrainLog* log = nullptr, TrainState* state_out = nullptr);

// Reference-guided inpaint stage. `dataset` must carry inpainted images.
std::vector<Gaussian3D> train_inpaint(const SceneDataset& ds, std::vector<Gaussian3D> gaussians,
                                      const TrainConfig& config, TrainLog* log = nullptr,
                                      TrainState* state_out = nullptr);

// Clone/split Gaussians whose accumulated positional gradient exceeds the
// threshold; prune low-opacity ones. Accumulators stay consistent.
void densify_and_prune(TrainState& state, const TrainConfig& config);

// Re-align estimated depths against currently rendered depth and re-evaluate
// every view's confidence. Exposed for tests; train_inpaint calls it on its
// refresh schedule.
void refresh_confidences(const SceneDataset& ds, TrainState& state, const TrainConfig& config);

// Builds the pseudo-ground-truth image for one view from the current
// geometry: consistency-gated forward warp of the reference, Poisson-blended
// into the view's image. The reference view maps to its own image over the
// full patch.
WarpCache build_warp_cache(const SceneDataset& ds, const TrainState& state, int view_id,
                           const TrainConfig& config);

} // namespace splat
