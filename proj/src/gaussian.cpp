#include "splatpaint/gaussian.hpp"

namespace splat {

Mat3 Gaussian3D::rotation_matrix() const {
    const Vec4 q = rotation / rotation.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

double* gaussian_param_ptr(Gaussian3D& g, int index) {
    if (index < 3) return g.position.data() + index;
    if (index < 7) return g.rotation.data() + (index - 3);
    if (index < 10) return g.log_scale.data() + (index - 7);
    if (index == 10) return &g.opacity_logit;
    return g.color.data() + (index - 11);
}

double grad_param(const GaussianGrad& g, int index) {
    if (index < 3) return g.position[index];
    if (index < 7) return g.rotation[index - 3];
    if (index < 10) return g.log_scale[index - 7];
    if (index == 10) return g.opacity_logit;
    return g.color[index - 11];
}

} // namespace splat
