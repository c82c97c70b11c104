#include "splatpaint/adam.hpp"

#include <cmath>

#include "splatpaint/error.hpp"

namespace splat {

void AdamState::resize(size_t gaussian_count) {
    m_.assign(gaussian_count * kGaussianParamCount, 0.0);
    v_.assign(gaussian_count * kGaussianParamCount, 0.0);
}

void AdamState::step(std::vector<Gaussian3D>& params, const std::vector<GaussianGrad>& grads,
                     const AdamParams& p, double lr_scale_position) {
    if (params.size() != size() || grads.size() != params.size())
        throw ValidationError("adam: accumulator shape does not match the parameter table");
    ++t_;
    const double bc1 = 1.0 - std::pow(p.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(p.beta2, double(t_));

    double lr[kGaussianParamCount];
    for (int k = 0; k < 3; ++k) lr[k] = p.lr_position * lr_scale_position;
    for (int k = 3; k < 7; ++k) lr[k] = p.lr_rotation;
    for (int k = 7; k < 10; ++k) lr[k] = p.lr_scale;
    lr[10] = p.lr_opacity;
    for (int k = 11; k < 14; ++k) lr[k] = p.lr_color;

#pragma omp parallel for schedule(static)
    for (long long i = 0; i < (long long)params.size(); ++i) {
        Gaussian3D& g = params[size_t(i)];
        for (int k = 0; k < kGaussianParamCount; ++k) {
            const size_t idx = size_t(i) * kGaussianParamCount + k;
            const double grad = grad_param(grads[size_t(i)], k);
            m_[idx] = p.beta1 * m_[idx] + (1.0 - p.beta1) * grad;
            v_[idx] = p.beta2 * v_[idx] + (1.0 - p.beta2) * grad * grad;
            const double m_hat = m_[idx] / bc1;
            const double v_hat = v_[idx] / bc2;
            *gaussian_param_ptr(g, k) -= lr[k] * m_hat / (std::sqrt(v_hat) + p.epsilon);
        }
        g.normalize_rotation();
        // Keep effective scales finite.
        for (int k = 0; k < 3; ++k) g.log_scale[k] = std::clamp(g.log_scale[k], -15.0, 15.0);
    }
}

void AdamState::filter(const std::vector<size_t>& keep) {
    std::vector<double> nm(keep.size() * kGaussianParamCount), nv(keep.size() * kGaussianParamCount);
    for (size_t j = 0; j < keep.size(); ++j) {
        for (int k = 0; k < kGaussianParamCount; ++k) {
            nm[j * kGaussianParamCount + k] = m_[keep[j] * kGaussianParamCount + k];
            nv[j * kGaussianParamCount + k] = v_[keep[j] * kGaussianParamCount + k];
        }
    }
    m_ = std::move(nm);
    v_ = std::move(nv);
}

void AdamState::append_zero(size_t count) {
    m_.resize(m_.size() + count * kGaussianParamCount, 0.0);
    v_.resize(v_.size() + count * kGaussianParamCount, 0.0);
}

} // namespace splat
