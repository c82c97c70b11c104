#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "splatpaint/error.hpp"

namespace splat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

// Single-channel scalar field, row-major.
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    Plane() = default;
    Plane(int w, int h, double fill = 0.0) : width(w), height(h), values(size_t(w) * h, fill) {}

    double& at(int x, int y) { return values[size_t(y) * width + x]; }
    double at(int x, int y) const { return values[size_t(y) * width + x]; }
    size_t size() const { return values.size(); }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

// RGB image, row-major interleaved, channel values in [0,1].
struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<double> pixels; // width*height*3

    ImageBuffer() = default;
    ImageBuffer(int w, int h, Vec3 fill = Vec3::Zero()) : width(w), height(h), pixels(size_t(w) * h * 3) {
        for (size_t i = 0; i < size_t(w) * h; ++i) {
            pixels[i * 3 + 0] = fill[0];
            pixels[i * 3 + 1] = fill[1];
            pixels[i * 3 + 2] = fill[2];
        }
    }

    double& at(int x, int y, int c) { return pixels[(size_t(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return pixels[(size_t(y) * width + x) * 3 + c]; }

    Vec3 rgb(int x, int y) const {
        size_t i = (size_t(y) * width + x) * 3;
        return Vec3(pixels[i], pixels[i + 1], pixels[i + 2]);
    }
    void set_rgb(int x, int y, const Vec3& v) {
        size_t i = (size_t(y) * width + x) * 3;
        pixels[i] = v[0];
        pixels[i + 1] = v[1];
        pixels[i + 2] = v[2];
    }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    size_t pixel_count() const { return size_t(width) * height; }

    // Luminance plane (Rec. 601 weights).
    Plane luminance() const;
};

// Depth field in scene units. A pixel is valid iff validity[i] is true;
// invalid entries must never be read by consumers.
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;
    std::vector<uint8_t> validity;

    DepthMap() = default;
    DepthMap(int w, int h)
        : width(w), height(h), values(size_t(w) * h, 0.0), validity(size_t(w) * h, 0) {}

    double at(int x, int y) const { return values[size_t(y) * width + x]; }
    bool valid(int x, int y) const { return validity[size_t(y) * width + x] != 0; }
    void set(int x, int y, double d) {
        size_t i = size_t(y) * width + x;
        values[i] = d;
        validity[i] = 1;
    }
    void invalidate(int x, int y) {
        size_t i = size_t(y) * width + x;
        values[i] = 0.0;
        validity[i] = 0;
    }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    size_t valid_count() const {
        size_t n = 0;
        for (uint8_t v : validity) n += v != 0;
        return n;
    }
    // Min/max over valid pixels; returns false when no pixel is valid.
    bool valid_range(double& lo, double& hi) const;
};

// Per-pixel inpaint mask; true = inpaint region M.
struct MaskImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> bits;

    MaskImage() = default;
    MaskImage(int w, int h, bool fill = false) : width(w), height(h), bits(size_t(w) * h, fill ? 1 : 0) {}

    bool at(int x, int y) const { return bits[size_t(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[size_t(y) * width + x] = v ? 1 : 0; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    size_t count() const {
        size_t n = 0;
        for (uint8_t b : bits) n += b != 0;
        return n;
    }
    bool empty() const { return count() == 0; }
    MaskImage complement() const {
        MaskImage m(width, height);
        for (size_t i = 0; i < bits.size(); ++i) m.bits[i] = bits[i] ? 0 : 1;
        return m;
    }
};

// Camera-space unit normals with per-pixel validity.
struct NormalMap {
    int width = 0;
    int height = 0;
    std::vector<double> values; // width*height*3
    std::vector<uint8_t> validity;

    NormalMap() = default;
    NormalMap(int w, int h)
        : width(w), height(h), values(size_t(w) * h * 3, 0.0), validity(size_t(w) * h, 0) {}

    Vec3 at(int x, int y) const {
        size_t i = (size_t(y) * width + x) * 3;
        return Vec3(values[i], values[i + 1], values[i + 2]);
    }
    bool valid(int x, int y) const { return validity[size_t(y) * width + x] != 0; }
    void set(int x, int y, const Vec3& n) {
        size_t i = (size_t(y) * width + x) * 3;
        values[i] = n[0];
        values[i + 1] = n[1];
        values[i + 2] = n[2];
        validity[size_t(y) * width + x] = 1;
    }
    void invalidate(int x, int y) { validity[size_t(y) * width + x] = 0; }
};

inline void require_same_dims(int wa, int ha, int wb, int hb, const char* what) {
    if (wa != wb || ha != hb)
        throw ValidationError(std::string(what) + ": dimension mismatch (" + std::to_string(wa) + "x" +
                              std::to_string(ha) + " vs " + std::to_string(wb) + "x" + std::to_string(hb) + ")");
}

} // namespace splat
