#include "metal/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "metal/errors.hpp"

namespace metal {

Mat<float> mse_map(const ImageTensor& x, const ImageTensor& xhat) {
    if (x.channels != xhat.channels || x.height != xhat.height || x.width != xhat.width)
        throw ShapeError("mse_map: image shapes differ");
    Mat<float> raw(x.height, x.width);
    for (int c = 0; c < x.channels; ++c)
        for (int y = 0; y < x.height; ++y)
            for (int px = 0; px < x.width; ++px) {
                float d = x.at(c, y, px) - xhat.at(c, y, px);
                raw(y, px) += d * d;
            }
    return raw;
}

namespace {

// reflect index into [0, n): ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

}  // namespace

Mat<float> gaussian_smooth(const Mat<float>& field, double sigma) {
    if (sigma < 0) throw ShapeError("gaussian_smooth: sigma must be >= 0");
    if (sigma == 0.0) return field;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        double w = std::exp(-(double(i) * i) / (2.0 * sigma * sigma));
        k[i + radius] = w;
        sum += w;
    }
    for (auto& w : k) w /= sum;

    const int h = field.rows, w = field.cols;
    Mat<float> tmp(h, w), out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * field(y, reflect(x + i, w));
            tmp(y, x) = static_cast<float>(acc);
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp(reflect(y + i, h), x);
            out(y, x) = static_cast<float>(acc);
        }
    return out;
}

AnomalyMap make_anomaly_map(const ImageTensor& x, const ImageTensor& xhat, double sigma) {
    AnomalyMap m;
    m.raw = mse_map(x, xhat);
    m.smoothed = gaussian_smooth(m.raw, sigma);
    m.sigma = sigma;
    return m;
}

double image_score(const AnomalyMap& map, ImageScoreMode mode) {
    const auto& f = map.smoothed;
    if (f.size() == 0) throw ShapeError("image_score: empty map");
    switch (mode) {
        case ImageScoreMode::Max:
            return *std::max_element(f.a.begin(), f.a.end());
        case ImageScoreMode::Mean: {
            double s = 0;
            for (float v : f.a) s += v;
            return s / double(f.size());
        }
        case ImageScoreMode::TopKMean: {
            size_t k = std::max<size_t>(1, f.size() / 100);
            std::vector<float> top(f.a);
            std::partial_sort(top.begin(), top.begin() + k, top.end(), std::greater<float>());
            double s = 0;
            for (size_t i = 0; i < k; ++i) s += top[i];
            return s / double(k);
        }
    }
    return 0;
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("anomaly map file truncated");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace

void write_amap(const std::string& path, const Mat<float>& smoothed) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write anomaly map: " + path);
    os.write("AMAP", 4);
    put_u32(os, kAmapVersion);
    put_u32(os, static_cast<uint32_t>(smoothed.rows));
    put_u32(os, static_cast<uint32_t>(smoothed.cols));
    for (float v : smoothed.a) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(os, bits);
    }
    if (!os) throw DataError("write failed: " + path);
}

Mat<float> read_amap(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open anomaly map: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "AMAP", 4) != 0)
        throw DataError("not an anomaly map file: " + path);
    uint32_t version = get_u32(is);
    if (version != kAmapVersion)
        throw DataError("unsupported anomaly map version " + std::to_string(version));
    uint32_t rows = get_u32(is), cols = get_u32(is);
    Mat<float> m(static_cast<int>(rows), static_cast<int>(cols));
    for (auto& v : m.a) {
        uint32_t bits = get_u32(is);
        std::memcpy(&v, &bits, 4);
    }
    return m;
}

}  // namespace metal
