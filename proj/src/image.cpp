#include "metal/image.hpp"

#include <algorithm>
#include <cmath>

namespace metal {

ImageTensor resize_bilinear(const ImageTensor& img, int side) {
    if (img.height == side && img.width == side) return img;
    ImageTensor out(img.channels, side, side);
    const float sy = static_cast<float>(img.height) / side;
    const float sx = static_cast<float>(img.width) / side;
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < side; ++y) {
            float fy = (y + 0.5f) * sy - 0.5f;
            int y0 = static_cast<int>(std::floor(fy));
            float wy = fy - y0;
            int y0c = std::clamp(y0, 0, img.height - 1);
            int y1c = std::clamp(y0 + 1, 0, img.height - 1);
            for (int x = 0; x < side; ++x) {
                float fx = (x + 0.5f) * sx - 0.5f;
                int x0 = static_cast<int>(std::floor(fx));
                float wx = fx - x0;
                int x0c = std::clamp(x0, 0, img.width - 1);
                int x1c = std::clamp(x0 + 1, 0, img.width - 1);
                float top = img.at(c, y0c, x0c) * (1 - wx) + img.at(c, y0c, x1c) * wx;
                float bot = img.at(c, y1c, x0c) * (1 - wx) + img.at(c, y1c, x1c) * wx;
                out.at(c, y, x) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int side) {
    if (mask.height == side && mask.width == side) return mask;
    BinaryMask out(side, side);
    const float sy = static_cast<float>(mask.height) / side;
    const float sx = static_cast<float>(mask.width) / side;
    for (int y = 0; y < side; ++y) {
        int yy = std::min(static_cast<int>((y + 0.5f) * sy), mask.height - 1);
        for (int x = 0; x < side; ++x) {
            int xx = std::min(static_cast<int>((x + 0.5f) * sx), mask.width - 1);
            out.at(y, x) = mask.at(yy, xx);
        }
    }
    return out;
}

}  // namespace metal
