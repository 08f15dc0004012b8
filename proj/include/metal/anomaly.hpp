// Per-pixel anomaly scoring: channel-summed squared error between input and
// reconstruction, Gaussian smoothing, image-level reduction, and the AMAP
// binary container.
#pragma once

#include <string>

#include "metal/config.hpp"
#include "metal/image.hpp"
#include "metal/tensor.hpp"

namespace metal {

struct AnomalyMap {
    Mat<float> raw;       // H x W, sum over channels of squared differences
    Mat<float> smoothed;  // Gaussian-filtered raw
    double sigma = 0.0;
};

// raw[y][x] = sum_c (x - xhat)^2
Mat<float> mse_map(const ImageTensor& x, const ImageTensor& xhat);

// 2-D Gaussian smoothing with reflect padding; sigma == 0 returns the input.
Mat<float> gaussian_smooth(const Mat<float>& field, double sigma);

AnomalyMap make_anomaly_map(const ImageTensor& x, const ImageTensor& xhat, double sigma);

// Image-level anomaly score of the smoothed field. TopKMean averages the
// largest 1% of pixels (at least one).
double image_score(const AnomalyMap& map, ImageScoreMode mode);

inline constexpr uint32_t kAmapVersion = 1;

// "AMAP" magic, u32 version, u32 height, u32 width, then h*w little-endian
// f32 values (the smoothed field), row-major.
void write_amap(const std::string& path, const Mat<float>& smoothed);
Mat<float> read_amap(const std::string& path);

}  // namespace metal
