#pragma once

#include <vector>

#include "splatpaint/gaussian.hpp"

namespace splat {

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;
    // Per-group learning rates, vanilla-3DGS ratios. Position is additionally
    // multiplied by the scene extent and decayed exponentially.
    double lr_position = 1.6e-4;
    double lr_position_final = 1.6e-6;
    double lr_rotation = 1e-3;
    double lr_scale = 5e-3;
    double lr_opacity = 5e-2;
    double lr_color = 2.5e-3;
};

// First/second-moment accumulators, one slot per Gaussian parameter.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(size_t gaussian_count) { resize(gaussian_count); }

    void resize(size_t gaussian_count);
    size_t size() const { return m_.size() / kGaussianParamCount; }

    // One update; lr_scale_position multiplies the position rate (scene extent
    // times schedule decay). Quaternions are renormalized by the caller.
    void step(std::vector<Gaussian3D>& params, const std::vector<GaussianGrad>& grads,
              const AdamParams& p, double lr_scale_position);

    // Keep accumulator rows listed in `keep`, in order (prune).
    void filter(const std::vector<size_t>& keep);
    // Append zeroed rows for newly created Gaussians.
    void append_zero(size_t count);

    long long timestep() const { return t_; }

private:
    std::vector<double> m_;
    std::vector<double> v_;
    long long t_ = 0;
};

} // namespace splat
