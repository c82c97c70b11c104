#include "splatpaint/camera.hpp"

namespace splat {

void CameraView::validate() const {
    const Mat3 rrt = rotation * rotation.transpose();
    if ((rrt - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
        throw ValidationError("camera rotation is not orthonormal");
    if (rotation.determinant() < 0.0)
        throw ValidationError("camera rotation has negative determinant");
    if (!(fx > 0.0) || !(fy > 0.0))
        throw ValidationError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0)
        throw ValidationError("camera image dimensions must be positive");
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
        throw ValidationError("camera principal point outside the image");
}

} // namespace splat
