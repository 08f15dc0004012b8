#pragma once

#include <string>

#include "metal/image.hpp"
#include "metal/tensor.hpp"

namespace metal {

// Decode a PNG/JPEG file into a 3-channel RGB tensor scaled to [0,1] and
// bilinearly resized to side x side. Single-channel inputs are replicated.
ImageTensor load_image(const std::string& path, int side);

// Decode a ground-truth mask (any nonzero pixel is positive) and resize it
// with nearest-neighbour so it stays binary.
BinaryMask load_mask(const std::string& path, int side);

void save_png_rgb(const std::string& path, const ImageTensor& img);

// Min-max normalizes the field per image and writes an 8-bit grayscale PNG.
void save_png_heatmap(const std::string& path, const Mat<float>& field);

void save_png_mask(const std::string& path, const BinaryMask& mask);

}  // namespace metal
