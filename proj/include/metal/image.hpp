#pragma once

#include <cstdint>
#include <vector>

namespace metal {

// Pixel tensor, values in [0,1], stored row-major per channel ([c][y][x]).
struct ImageTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> v;

    ImageTensor() = default;
    ImageTensor(int c, int h, int w)
        : channels(c), height(h), width(w), v(static_cast<size_t>(c) * h * w, 0.0f) {}

    float& at(int c, int y, int x) {
        return v[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return v[(static_cast<size_t>(c) * height + y) * width + x];
    }
    size_t size() const { return v.size(); }
};

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> v;

    BinaryMask() = default;
    BinaryMask(int h, int w) : height(h), width(w), v(static_cast<size_t>(h) * w, 0) {}

    uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * width + x]; }
};

// Bilinear resample to side x side (images).
ImageTensor resize_bilinear(const ImageTensor& img, int side);

// Nearest-neighbour resample to side x side (masks stay binary).
BinaryMask resize_nearest(const BinaryMask& mask, int side);

}  // namespace metal
