#include "splatpaint/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "splatpaint/depth_ops.hpp"
#include "splatpaint/ssim.hpp"

namespace splat {
namespace {

using ordered_json = nlohmann::ordered_json;

double position_lr_scale(const TrainConfig& c, int iteration, int total, double extent) {
    const double ratio = c.adam.lr_position_final / c.adam.lr_position;
    const double t = total > 0 ? double(iteration) / double(total) : 0.0;
    return extent * std::pow(ratio, t);
}

double view_weight(const ConfidenceRecord& rec, const TrainConfig& c) {
    switch (c.weight_mode) {
        case WeightMode::Uniform: return 1.0;
        case WeightMode::Threshold: return rec.conf >= c.confidence.sigmoid_beta ? 1.0 : 0.0;
        case WeightMode::Confidence: return rec.weight;
    }
    return 1.0;
}

size_t count_depth_pairs(const DepthMap& a, const DepthMap& b, const MaskImage* outside_of) {
    size_t n = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (outside_of && outside_of->at(x, y)) continue;
            if (a.valid(x, y) && b.valid(x, y)) ++n;
        }
    return n;
}

size_t count_normal_pairs(const NormalMap& a, const NormalMap& b, const PatchRect& patch) {
    size_t n = 0;
    const int x1 = std::min(a.width, patch.x_end()), y1 = std::min(a.height, patch.y_end());
    for (int y = std::max(0, patch.y); y < y1; ++y)
        for (int x = std::max(0, patch.x); x < x1; ++x)
            if (a.valid(x, y) && b.valid(x, y)) ++n;
    return n;
}

PatchRect centered_patch(int cx, int cy, int size, int w, int h) {
    PatchRect r;
    r.width = std::min(size, w);
    r.height = std::min(size, h);
    r.x = std::clamp(cx - r.width / 2, 0, w - r.width);
    r.y = std::clamp(cy - r.height / 2, 0, h - r.height);
    return r;
}

std::vector<std::pair<int, int>> mask_pixels(const MaskImage& m) {
    std::vector<std::pair<int, int>> px;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y)) px.push_back({x, y});
    return px;
}

} // namespace

std::string to_string(WeightMode m) {
    switch (m) {
        case WeightMode::Confidence: return "confidence";
        case WeightMode::Uniform: return "uniform";
        case WeightMode::Threshold: return "threshold";
    }
    return "confidence";
}

WeightMode weight_mode_from_string(const std::string& s) {
    if (s == "confidence") return WeightMode::Confidence;
    if (s == "uniform") return WeightMode::Uniform;
    if (s == "threshold") return WeightMode::Threshold;
    throw ValidationError("unknown weight mode: " + s + " (expected confidence|uniform|threshold)");
}

void TrainConfig::validate() const {
    if (lambda_ssim < 0.0 || lambda_ssim > 1.0)
        throw ValidationError("config: lambda_ssim must be in [0,1]");
    if (lambda_depth < 0.0 || lambda_normal < 0.0 || lambda_perceptual < 0.0)
        throw ValidationError("config: loss weights must be non-negative");
    if (iterations_initial < 0 || iterations_inpaint < 0)
        throw ValidationError("config: iteration counts must be non-negative");
    if (!(refresh_fraction > 0.0))
        throw ValidationError("config: refresh interval must be positive");
    if (densify_interval <= 0) throw ValidationError("config: densify_interval must be positive");
    if (normal_patch_px < 3 || perceptual_patch_px < 16)
        throw ValidationError("config: patch sizes too small");
    if (!(consistency_tau_fraction > 0.0))
        throw ValidationError("config: consistency threshold must be positive");
}

std::string train_config_to_json(const TrainConfig& c) {
    ordered_json j;
    j["lambda_ssim"] = c.lambda_ssim;
    j["lambda_depth"] = c.lambda_depth;
    j["lambda_normal"] = c.lambda_normal;
    j["lambda_perceptual"] = c.lambda_perceptual;
    j["iterations_initial"] = c.iterations_initial;
    j["iterations_inpaint"] = c.iterations_inpaint;
    j["adam"] = {{"beta1", c.adam.beta1},
                 {"beta2", c.adam.beta2},
                 {"epsilon", c.adam.epsilon},
                 {"lr_position", c.adam.lr_position},
                 {"lr_position_final", c.adam.lr_position_final},
                 {"lr_rotation", c.adam.lr_rotation},
                 {"lr_scale", c.adam.lr_scale},
                 {"lr_opacity", c.adam.lr_opacity},
                 {"lr_color", c.adam.lr_color}};
    j["densify_interval"] = c.densify_interval;
    j["densify_start"] = c.densify_start;
    j["densify_end_fraction"] = c.densify_end_fraction;
    j["densify_grad_threshold"] = c.densify_grad_threshold;
    j["densify_scale_fraction"] = c.densify_scale_fraction;
    j["prune_opacity"] = c.prune_opacity;
    j["consistency_tau_fraction"] = c.consistency_tau_fraction;
    j["refresh_fraction"] = c.refresh_fraction;
    j["confidence"] = {{"sigmoid_alpha", c.confidence.sigmoid_alpha},
                       {"sigmoid_beta", c.confidence.sigmoid_beta},
                       {"patch_margin_frac", c.confidence.patch_margin_frac},
                       {"min_coverage", c.confidence.min_coverage},
                       {"include_interpolated", c.confidence.include_interpolated},
                       {"bilateral",
                        {{"radius", c.confidence.bilateral.radius},
                         {"sigma_spatial", c.confidence.bilateral.sigma_spatial},
                         {"sigma_color", c.confidence.bilateral.sigma_color},
                         {"depth_sigma_fraction", c.confidence.bilateral.depth_sigma_fraction},
                         {"sigma_normal", c.confidence.bilateral.sigma_normal}}}};
    j["normal_patch_px"] = c.normal_patch_px;
    j["perceptual_patch_px"] = c.perceptual_patch_px;
    j["eval_patch_margin"] = c.eval_patch_margin;
    j["weight_mode"] = to_string(c.weight_mode);
    j["render"] = {{"near_plane", c.render.near_plane},
                   {"tile_size", c.render.tile_size},
                   {"footprint_sigma", c.render.footprint_sigma},
                   {"alpha_min", c.render.alpha_min},
                   {"alpha_max", c.render.alpha_max},
                   {"transmittance_min", c.render.transmittance_min},
                   {"cov_regularization", c.render.cov_regularization},
                   {"depth_alpha_floor", c.render.depth_alpha_floor},
                   {"normalize_depth", c.render.normalize_depth},
                   {"background", {c.render.background[0], c.render.background[1], c.render.background[2]}}};
    j["seed"] = c.seed;
    j["log_every"] = c.log_every;
    return j.dump();
}

TrainConfig train_config_from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("missing file: " + path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad config json in " + path.string() + ": " + e.what());
    }
    TrainConfig c;
    const auto get = [](const ordered_json& o, const char* key, auto& out) {
        if (o.contains(key)) out = o.at(key).get<std::decay_t<decltype(out)>>();
    };
    get(j, "lambda_ssim", c.lambda_ssim);
    get(j, "lambda_depth", c.lambda_depth);
    get(j, "lambda_normal", c.lambda_normal);
    get(j, "lambda_perceptual", c.lambda_perceptual);
    get(j, "iterations_initial", c.iterations_initial);
    get(j, "iterations_inpaint", c.iterations_inpaint);
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        get(a, "beta1", c.adam.beta1);
        get(a, "beta2", c.adam.beta2);
        get(a, "epsilon", c.adam.epsilon);
        get(a, "lr_position", c.adam.lr_position);
        get(a, "lr_position_final", c.adam.lr_position_final);
        get(a, "lr_rotation", c.adam.lr_rotation);
        get(a, "lr_scale", c.adam.lr_scale);
        get(a, "lr_opacity", c.adam.lr_opacity);
        get(a, "lr_color", c.adam.lr_color);
    }
    get(j, "densify_interval", c.densify_interval);
    get(j, "densify_start", c.densify_start);
    get(j, "densify_end_fraction", c.densify_end_fraction);
    get(j, "densify_grad_threshold", c.densify_grad_threshold);
    get(j, "densify_scale_fraction", c.densify_scale_fraction);
    get(j, "prune_opacity", c.prune_opacity);
    get(j, "consistency_tau_fraction", c.consistency_tau_fraction);
    get(j, "refresh_fraction", c.refresh_fraction);
    if (j.contains("confidence")) {
        const auto& cf = j.at("confidence");
        get(cf, "sigmoid_alpha", c.confidence.sigmoid_alpha);
        get(cf, "sigmoid_beta", c.confidence.sigmoid_beta);
        get(cf, "patch_margin_frac", c.confidence.patch_margin_frac);
        get(cf, "min_coverage", c.confidence.min_coverage);
        get(cf, "include_interpolated", c.confidence.include_interpolated);
        if (cf.contains("bilateral")) {
            const auto& b = cf.at("bilateral");
            get(b, "radius", c.confidence.bilateral.radius);
            get(b, "sigma_spatial", c.confidence.bilateral.sigma_spatial);
            get(b, "sigma_color", c.confidence.bilateral.sigma_color);
            get(b, "depth_sigma_fraction", c.confidence.bilateral.depth_sigma_fraction);
            get(b, "sigma_normal", c.confidence.bilateral.sigma_normal);
        }
    }
    get(j, "normal_patch_px", c.normal_patch_px);
    get(j, "perceptual_patch_px", c.perceptual_patch_px);
    get(j, "eval_patch_margin", c.eval_patch_margin);
    if (j.contains("weight_mode")) c.weight_mode = weight_mode_from_string(j.at("weight_mode"));
    if (j.contains("render")) {
        const auto& r = j.at("render");
        get(r, "near_plane", c.render.near_plane);
        get(r, "tile_size", c.render.tile_size);
        get(r, "footprint_sigma", c.render.footprint_sigma);
        get(r, "alpha_min", c.render.alpha_min);
        get(r, "alpha_max", c.render.alpha_max);
        get(r, "transmittance_min", c.render.transmittance_min);
        get(r, "cov_regularization", c.render.cov_regularization);
        get(r, "depth_alpha_floor", c.render.depth_alpha_floor);
        get(r, "normalize_depth", c.render.normalize_depth);
        if (r.contains("background")) {
            const auto bg = r.at("background").get<std::vector<double>>();
            if (bg.size() != 3) throw FormatError("config: background must have 3 entries");
            c.render.background = Vec3(bg[0], bg[1], bg[2]);
        }
    }
    get(j, "seed", c.seed);
    get(j, "log_every", c.log_every);
    c.validate();
    return c;
}

TrainLog::TrainLog(const std::filesystem::path& path, const TrainConfig& config)
    : out_(std::make_shared<std::ofstream>(path)) {
    if (!*out_) throw ValidationError("cannot open log for writing: " + path.string());
    *out_ << "{\"config\":" << train_config_to_json(config) << "}\n";
}

void TrainLog::record(int iteration, int view_id, double total, double l_color, double l_depth,
                      double l_normal, double l_perceptual, size_t gaussian_count,
                      double p_prime_fraction) {
    if (!out_) return;
    ordered_json j;
    j["iteration"] = iteration;
    j["view_id"] = view_id;
    j["total"] = total;
    j["L_C"] = l_color;
    j["L_D"] = l_depth;
    j["L_iN"] = l_normal;
    j["L_iLPIPS"] = l_perceptual;
    j["gaussian_count"] = gaussian_count;
    j["p_prime_fraction"] = p_prime_fraction;
    *out_ << j.dump() << "\n";
}

void prepare_views(SceneDataset& ds) {
    for (ViewRecord& v : ds.views) {
        const AffineDepthFit fit = align_depth(v.depth_mono, v.sparse);
        v.depth_mono = apply_affine(v.depth_mono, fit);
        v.normal_mono = normal_from_depth(v.depth_mono, v.cam);
    }
}

double scene_extent(const SceneDataset& ds) {
    Vec3 centroid = Vec3::Zero();
    for (const ViewRecord& v : ds.views) centroid += v.cam.camera_center();
    centroid /= double(ds.views.size());
    double extent = 0.0;
    for (const ViewRecord& v : ds.views)
        extent = std::max(extent, (v.cam.camera_center() - centroid).norm());
    return extent > 1e-9 ? extent : 1.0;
}

std::vector<Gaussian3D> seed_gaussians(const SceneDataset& ds) {
    std::vector<Gaussian3D> out;
    for (const ViewRecord& v : ds.views) {
        for (const SparseDepthSample& s : v.sparse.samples) {
            Gaussian3D g;
            g.position = v.cam.cam_to_world(s.depth * v.cam.pixel_ray(s.u, s.v));
            g.color = v.image.rgb(s.u, s.v);
            g.opacity_logit = logit(0.1);
            out.push_back(g);
        }
    }
    if (out.empty()) throw ValidationError("seed_gaussians: dataset has no sparse samples");

    // Isotropic scale from the mean distance to the 3 nearest neighbors.
    const size_t n = out.size();
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < (long long)n; ++i) {
        double best[3] = {1e300, 1e300, 1e300};
        for (size_t j = 0; j < n; ++j) {
            if (j == size_t(i)) continue;
            const double d2 = (out[size_t(i)].position - out[j].position).squaredNorm();
            if (d2 < best[0]) {
                best[2] = best[1];
                best[1] = best[0];
                best[0] = d2;
            } else if (d2 < best[1]) {
                best[2] = best[1];
                best[1] = d2;
            } else if (d2 < best[2]) {
                best[2] = d2;
            }
        }
        double mean = 0.0;
        int cnt = 0;
        for (double b : best)
            if (b < 1e299) {
                mean += std::sqrt(b);
                ++cnt;
            }
        const double scale = std::max(cnt ? mean / cnt : 0.01, 1e-5);
        out[size_t(i)].log_scale = Vec3::Constant(std::log(scale));
    }
    return out;
}

void densify_and_prune(TrainState& state, const TrainConfig& config) {
    const size_t n = state.gaussians.size();
    std::vector<Gaussian3D> kept;
    std::vector<size_t> keep_idx;
    std::vector<Gaussian3D> born;
    std::normal_distribution<double> unit(0.0, 1.0);
    const double scale_limit = config.densify_scale_fraction * state.scene_extent;

    for (size_t i = 0; i < n; ++i) {
        Gaussian3D g = state.gaussians[i];
        if (g.opacity() < config.prune_opacity) continue; // prune
        const double avg = state.grad_count[i] > 0 ? state.grad_accum[i] / state.grad_count[i] : 0.0;
        if (avg > config.densify_grad_threshold) {
            if (g.scale().maxCoeff() <= scale_limit) {
                born.push_back(g); // clone
            } else {
                // Split: shrink and sample two offsets inside the footprint.
                const Mat3 rot = g.rotation_matrix();
                const Vec3 s = g.scale();
                Gaussian3D child = g;
                child.log_scale = (s / 1.6).array().log();
                Vec3 off1, off2;
                for (int k = 0; k < 3; ++k) off1[k] = unit(state.rng) * s[k];
                for (int k = 0; k < 3; ++k) off2[k] = unit(state.rng) * s[k];
                Gaussian3D second = child;
                child.position = g.position + rot * off1;
                second.position = g.position + rot * off2;
                g = child;
                born.push_back(second);
            }
        }
        kept.push_back(g);
        keep_idx.push_back(i);
    }

    state.adam.filter(keep_idx);
    state.adam.append_zero(born.size());
    kept.insert(kept.end(), born.begin(), born.end());
    state.gaussians = std::move(kept);
    state.grad_accum.assign(state.gaussians.size(), 0.0);
    state.grad_count.assign(state.gaussians.size(), 0);
}

namespace {

void init_state(TrainState& state, const SceneDataset& ds, const TrainConfig& config,
                std::vector<Gaussian3D> gaussians) {
    state.gaussians = std::move(gaussians);
    state.adam.resize(state.gaussians.size());
    state.scene_extent = scene_extent(ds);
    state.rng.seed(config.seed);
    state.grad_accum.assign(state.gaussians.size(), 0.0);
    state.grad_count.assign(state.gaussians.size(), 0);
    state.aligned_depth.clear();
    state.aligned_normal.clear();
    for (const ViewRecord& v : ds.views) {
        state.aligned_depth.push_back(v.depth_mono);
        state.aligned_normal.push_back(v.normal_mono);
    }
    state.warp_caches.assign(ds.views.size(), {});
}

void accumulate_densify_stats(TrainState& state, const std::vector<GaussianGrad>& grads) {
    for (size_t i = 0; i < grads.size(); ++i) {
        const double norm = grads[i].position.norm();
        if (norm > 0.0) {
            state.grad_accum[i] += norm;
            state.grad_count[i] += 1;
        }
    }
}

void check_finite(double total, int iteration) {
    if (!std::isfinite(total))
        throw DivergenceError("loss diverged (non-finite) at iteration " + std::to_string(iteration));
}

} // namespace

std::vector<Gaussian3D> train_initial(const SceneDataset& ds, const TrainConfig& config, TrainLog* log,
                                      TrainState* state_out) {
    config.validate();
    ds.validate();
    TrainState state;
    init_state(state, ds, config, seed_gaussians(ds));

    std::uniform_int_distribution<int> pick_view(0, int(ds.views.size()) - 1);
    const int total_iters = config.iterations_initial;
    const int densify_stop = int(config.densify_end_fraction * total_iters);

    for (int it = 0; it < total_iters; ++it) {
        state.iteration = it;
        const int v = pick_view(state.rng);
        const ViewRecord& view = ds.views[size_t(v)];

        const RenderOutput out = render(state.gaussians, view.cam, config.render);
        PixelGrads pg(view.cam.width, view.cam.height);

        const double lc =
            loss_color_masked(view.image, out.color, view.mask, config.lambda_ssim, &pg);
        double ld = 0.0;
        if (config.lambda_depth > 0.0 &&
            count_depth_pairs(view.depth_mono, out.depth, &view.mask) > 0)
            ld = loss_depth_initial(view.depth_mono, out.depth, view.mask, &pg, config.lambda_depth);

        const double total = lc + config.lambda_depth * ld;
        check_finite(total, it);

        const auto grads = render_with_gradients(state.gaussians, view.cam, pg, config.render);
        accumulate_densify_stats(state, grads);
        state.adam.step(state.gaussians, grads, config.adam,
                        position_lr_scale(config, it, total_iters, state.scene_extent));

        if (it >= config.densify_start && it < densify_stop && it % config.densify_interval == 0)
            densify_and_prune(state, config);

        if (log && (it % config.log_every == 0 || it + 1 == total_iters))
            log->record(it, v, total, lc, ld, 0.0, 0.0, state.gaussians.size(), 0.0);
    }

    if (state_out) *state_out = std::move(state);
    return state_out ? state_out->gaussians : state.gaussians;
}

void refresh_confidences(const SceneDataset& ds, TrainState& state, const TrainConfig& config) {
    // Re-align each view's estimated depth to the currently rendered depth on
    // a stride-4 grid outside the mask, then re-score every view against the
    // reference.
    for (size_t v = 0; v < ds.views.size(); ++v) {
        const ViewRecord& view = ds.views[v];
        const RenderOutput out = render(state.gaussians, view.cam, config.render);
        try {
            const AffineDepthFit fit =
                align_depth_dense(ds.views[v].depth_mono, out.depth, 4, &view.mask);
            state.aligned_depth[v] = apply_affine(ds.views[v].depth_mono, fit);
            state.aligned_normal[v] = normal_from_depth(state.aligned_depth[v], view.cam);
        } catch (const ValidationError&) {
            // Rendered depth too sparse to fit; keep the previous alignment.
        }
    }

    SceneDataset shadow = ds; // shallow structural copy with refreshed depths
    for (size_t v = 0; v < ds.views.size(); ++v) {
        shadow.views[v].depth_mono = state.aligned_depth[v];
        shadow.views[v].normal_mono = state.aligned_normal[v];
    }
    state.confidences = evaluate_all_confidences(
        shadow, state.aligned_depth[size_t(ds.reference_view_id)], config.confidence, state.iteration);
    for (WarpCache& c : state.warp_caches) c.valid = false;
}

WarpCache build_warp_cache(const SceneDataset& ds, const TrainState& state, int view_id,
                           const TrainConfig& config) {
    WarpCache cache;
    const ViewRecord& target = ds.views[size_t(view_id)];
    const MaskImage complement = target.mask.complement();

    if (view_id == ds.reference_view_id) {
        // The reference supervises itself: pseudo ground truth is its own
        // image over the whole patch.
        cache.i_warp = target.image;
        cache.union_set = complement;
        const PatchRect patch = extract_patch(target.mask, config.confidence.patch_margin_frac);
        for (int y = patch.y; y < patch.y_end(); ++y)
            for (int x = patch.x; x < patch.x_end(); ++x)
                if (target.mask.at(x, y)) cache.union_set.set(x, y, true);
        cache.p_prime_fraction = 1.0;
        cache.valid = true;
        return cache;
    }

    const ViewRecord& ref = ds.views[size_t(ds.reference_view_id)];
    const RenderOutput ref_out = render(state.gaussians, ref.cam, config.render);
    const RenderOutput tar_out = render(state.gaussians, target.cam, config.render);

    // Target rendered depth reprojected onto the reference grid.
    WarpResult depth_to_ref = forward_warp(tar_out.color, tar_out.depth, target.cam, ref.cam, {});
    if (!config.confidence.include_interpolated) {
        for (int y = 0; y < depth_to_ref.warped_depth.height; ++y)
            for (int x = 0; x < depth_to_ref.warped_depth.width; ++x)
                if (depth_to_ref.interpolated.at(x, y)) depth_to_ref.warped_depth.invalidate(x, y);
    }

    double lo = 0.0, hi = 0.0;
    double tau = 1e-3;
    if (ref_out.depth.valid_range(lo, hi))
        tau = std::max(1e-12, config.consistency_tau_fraction * std::max(hi - lo, 1e-12));

    const PatchRect ref_patch = extract_patch(ref.mask, config.confidence.patch_margin_frac);
    const ConsistencySet pset =
        consistency_set(ref_out.depth, depth_to_ref.warped_depth, ref_patch, ref.mask, tau);
    cache.p_prime_fraction = pset.fraction();

    // Warp only the consistent reference pixels into the target view, using
    // the optimized (rendered) reference depth.
    ForwardWarpParams wp;
    wp.src_select = &pset.members;
    const WarpResult to_target = forward_warp(ref.image, ref_out.depth, ref.cam, target.cam, wp);

    // Blend region: warped coverage inside the target mask, off the border.
    MaskImage region(target.image.width, target.image.height);
    size_t region_count = 0;
    for (int y = 1; y < target.image.height - 1; ++y)
        for (int x = 1; x < target.image.width - 1; ++x)
            if (target.mask.at(x, y) && to_target.coverage.at(x, y)) {
                region.set(x, y, true);
                ++region_count;
            }

    cache.union_set = complement;
    if (region_count == 0) {
        // Zero-coverage fallback: pseudo ground truth degenerates to the
        // view's own image; the color loss sees only M^c.
        cache.i_warp = target.image;
        cache.valid = true;
        return cache;
    }

    ImageBuffer source = target.image;
    for (int y = 0; y < source.height; ++y)
        for (int x = 0; x < source.width; ++x)
            if (to_target.coverage.at(x, y)) source.set_rgb(x, y, to_target.warped.rgb(x, y));

    cache.i_warp = poisson_blend(target.image, source, region);
    for (int y = 0; y < region.height; ++y)
        for (int x = 0; x < region.width; ++x)
            if (region.at(x, y)) cache.union_set.set(x, y, true);
    cache.valid = true;
    return cache;
}

std::vector<Gaussian3D> train_inpaint(const SceneDataset& ds, std::vector<Gaussian3D> gaussians,
                                      const TrainConfig& config, TrainLog* log, TrainState* state_out) {
    config.validate();
    ds.validate();
    TrainState state;
    init_state(state, ds, config, std::move(gaussians));

    std::uniform_int_distribution<int> pick_view(0, int(ds.views.size()) - 1);
    const int total_iters = config.iterations_inpaint;
    const int densify_stop = int(config.densify_end_fraction * total_iters);
    const int refresh_every = std::max(1, int(std::lround(config.refresh_fraction * total_iters)));

    std::vector<std::vector<std::pair<int, int>>> mask_px;
    for (const ViewRecord& v : ds.views) mask_px.push_back(mask_pixels(v.mask));

    for (int it = 0; it < total_iters; ++it) {
        state.iteration = it;
        if (it % refresh_every == 0) refresh_confidences(ds, state, config);

        const int v = pick_view(state.rng);
        const ViewRecord& view = ds.views[size_t(v)];
        const double w_inp = view_weight(state.confidences[size_t(v)], config);

        if (!state.warp_caches[size_t(v)].valid)
            state.warp_caches[size_t(v)] = build_warp_cache(ds, state, v, config);
        const WarpCache& cache = state.warp_caches[size_t(v)];

        const RenderOutput out = render(state.gaussians, view.cam, config.render);
        PixelGrads pg(view.cam.width, view.cam.height);

        const double lc =
            loss_color_set(cache.i_warp, out.color, cache.union_set, config.lambda_ssim, &pg);

        double ld = 0.0;
        if (config.lambda_depth > 0.0 &&
            count_depth_pairs(state.aligned_depth[size_t(v)], out.depth, nullptr) > 0)
            ld = loss_depth_inpaint(state.aligned_depth[size_t(v)], out.depth, view.mask, w_inp, &pg,
                                    config.lambda_depth);

        double ln = 0.0;
        if (!mask_px[size_t(v)].empty()) {
            std::uniform_int_distribution<size_t> pick_px(0, mask_px[size_t(v)].size() - 1);
            const auto [cx, cy] = mask_px[size_t(v)][pick_px(state.rng)];
            const PatchRect npatch =
                centered_patch(cx, cy, config.normal_patch_px, view.cam.width, view.cam.height);
            if (config.lambda_normal > 0.0 &&
                count_normal_pairs(state.aligned_normal[size_t(v)], out.normal, npatch) > 0)
                ln = loss_normal(state.aligned_normal[size_t(v)], out.normal, npatch, w_inp,
                                 out.depth, view.cam, &pg, config.lambda_normal);
        }

        double lp = 0.0;
        if (config.lambda_perceptual > 0.0 && !mask_px[size_t(v)].empty()) {
            PatchRect ppatch = extract_patch(view.mask, config.confidence.patch_margin_frac);
            if (ppatch.width < 16 || ppatch.height < 16) {
                std::uniform_int_distribution<size_t> pick_px(0, mask_px[size_t(v)].size() - 1);
                const auto [cx, cy] = mask_px[size_t(v)][pick_px(state.rng)];
                ppatch = centered_patch(cx, cy, config.perceptual_patch_px, view.cam.width,
                                        view.cam.height);
            }
            lp = loss_perceptual_patch(cache.i_warp, out.color, ppatch, w_inp, &pg,
                                       config.lambda_perceptual);
        }

        const double total = lc + config.lambda_depth * ld + config.lambda_normal * ln +
                             config.lambda_perceptual * lp;
        check_finite(total, it);

        const auto grads = render_with_gradients(state.gaussians, view.cam, pg, config.render);
        accumulate_densify_stats(state, grads);
        state.adam.step(state.gaussians, grads, config.adam,
                        position_lr_scale(config, it, total_iters, state.scene_extent));

        if (it >= config.densify_start && it < densify_stop && it % config.densify_interval == 0)
            densify_and_prune(state, config);

        if (log && (it % config.log_every == 0 || it + 1 == total_iters))
            log->record(it, v, total, lc, ld, ln, lp, state.gaussians.size(),
                        cache.p_prime_fraction);
    }

    // Final refresh so reported confidences and P' fractions reflect the
    // final geometry.
    if (total_iters > 0) {
        state.iteration = total_iters;
        refresh_confidences(ds, state, config);
        for (size_t v = 0; v < ds.views.size(); ++v)
            state.warp_caches[v] = build_warp_cache(ds, state, int(v), config);
    }

    if (state_out) *state_out = std::move(state);
    return state_out ? state_out->gaussians : state.gaussians;
}

} // namespace splat
