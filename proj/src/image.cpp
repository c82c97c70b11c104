#include "splatpaint/image.hpp"

#include <algorithm>

namespace splat {

Plane ImageBuffer::luminance() const {
    Plane p(width, height);
    for (size_t i = 0; i < pixel_count(); ++i)
        p.values[i] = 0.299 * pixels[i * 3] + 0.587 * pixels[i * 3 + 1] + 0.114 * pixels[i * 3 + 2];
    return p;
}

bool DepthMap::valid_range(double& lo, double& hi) const {
    lo = std::numeric_limits<double>::max();
    hi = std::numeric_limits<double>::lowest();
    bool any = false;
    for (size_t i = 0; i < values.size(); ++i) {
        if (!validity[i]) continue;
        lo = std::min(lo, values[i]);
        hi = std::max(hi, values[i]);
        any = true;
    }
    return any;
}

} // namespace splat
