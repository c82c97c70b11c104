#pragma once

#include <cmath>
#include <vector>

#include "splatpaint/image.hpp"

namespace splat {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// One anisotropic splat. Scale is stored as log of the per-axis standard
// deviation; opacity as a logit so the effective value stays in (0,1).
struct Gaussian3D {
    Vec3 position = Vec3::Zero();
    Vec4 rotation = Vec4(1, 0, 0, 0); // quaternion (w, x, y, z)
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    Vec3 color = Vec3::Zero();

    double opacity() const { return logistic(opacity_logit); }
    Vec3 scale() const { return log_scale.array().exp(); }

    // Rotation matrix of the normalized quaternion.
    Mat3 rotation_matrix() const;

    void normalize_rotation() { rotation /= rotation.norm(); }
};

// Per-parameter gradients, same layout as Gaussian3D.
struct GaussianGrad {
    Vec3 position = Vec3::Zero();
    Vec4 rotation = Vec4::Zero();
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    Vec3 color = Vec3::Zero();

    void add(const GaussianGrad& o) {
        position += o.position;
        rotation += o.rotation;
        log_scale += o.log_scale;
        opacity_logit += o.opacity_logit;
        color += o.color;
    }
};

constexpr int kGaussianParamCount = 14;

// Flat parameter views used by the finite-difference oracle and the optimizer:
// order is position(3), rotation(4), log_scale(3), opacity_logit(1), color(3).
double* gaussian_param_ptr(Gaussian3D& g, int index);
double grad_param(const GaussianGrad& g, int index);

} // namespace splat
