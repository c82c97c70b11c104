#pragma once

#include "splatpaint/image.hpp"

namespace splat {

// Pinhole camera with world-to-camera rigid pose.
// x_cam = rotation * x_world + translation; u = fx*x/z + cx, v = fy*y/z + cy.
// Continuous pixel coordinates coincide with integer pixel indices
// (pixel (i,j) samples the image at exactly (i,j)).
struct CameraView {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    int width = 0;
    int height = 0;

    Vec3 world_to_cam(const Vec3& p) const { return rotation * p + translation; }
    Vec3 cam_to_world(const Vec3& p) const { return rotation.transpose() * (p - translation); }
    Vec3 camera_center() const { return -(rotation.transpose() * translation); }

    // Camera-space ray direction with unit z for pixel (u,v).
    Vec3 pixel_ray(double u, double v) const { return Vec3((u - cx) / fx, (v - cy) / fy, 1.0); }

    Vec2 project(const Vec3& p_cam) const {
        return Vec2(fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy);
    }

    // Throws ValidationError on broken invariants (non-orthonormal rotation,
    // non-positive focal lengths, principal point outside the image).
    void validate() const;
};

} // namespace splat
