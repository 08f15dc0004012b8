#include "metal/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

#include "metal/errors.hpp"

namespace metal {

ImageTensor load_image(const std::string& path, int side) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("cannot read image: " + path);
    ImageTensor img(3, bgr.rows, bgr.cols);
    for (int y = 0; y < bgr.rows; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            img.at(0, y, x) = row[x][2] / 255.0f;
            img.at(1, y, x) = row[x][1] / 255.0f;
            img.at(2, y, x) = row[x][0] / 255.0f;
        }
    }
    return resize_bilinear(img, side);
}

BinaryMask load_mask(const std::string& path, int side) {
    cv::Mat gray = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (gray.empty()) throw DataError("cannot read mask: " + path);
    BinaryMask m(gray.rows, gray.cols);
    for (int y = 0; y < gray.rows; ++y) {
        const uint8_t* row = gray.ptr<uint8_t>(y);
        for (int x = 0; x < gray.cols; ++x) m.at(y, x) = row[x] > 127 ? 1 : 0;
    }
    return resize_nearest(m, side);
}

void save_png_rgb(const std::string& path, const ImageTensor& img) {
    if (img.channels != 3) throw DataError("save_png_rgb: expected 3 channels");
    cv::Mat bgr(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width; ++x) {
            auto q = [&](int c) {
                float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                return static_cast<uint8_t>(std::lround(v * 255.0f));
            };
            row[x] = cv::Vec3b(q(2), q(1), q(0));
        }
    }
    if (!cv::imwrite(path, bgr)) throw DataError("cannot write image: " + path);
}

void save_png_heatmap(const std::string& path, const Mat<float>& field) {
    float lo = *std::min_element(field.a.begin(), field.a.end());
    float hi = *std::max_element(field.a.begin(), field.a.end());
    float range = hi - lo;
    cv::Mat gray(field.rows, field.cols, CV_8UC1);
    for (int y = 0; y < field.rows; ++y) {
        uint8_t* row = gray.ptr<uint8_t>(y);
        for (int x = 0; x < field.cols; ++x) {
            float v = range > 0 ? (field(y, x) - lo) / range : 0.0f;
            row[x] = static_cast<uint8_t>(std::lround(v * 255.0f));
        }
    }
    if (!cv::imwrite(path, gray)) throw DataError("cannot write heatmap: " + path);
}

void save_png_mask(const std::string& path, const BinaryMask& mask) {
    cv::Mat gray(mask.height, mask.width, CV_8UC1);
    for (int y = 0; y < mask.height; ++y) {
        uint8_t* row = gray.ptr<uint8_t>(y);
        for (int x = 0; x < mask.width; ++x) row[x] = mask.at(y, x) ? 255 : 0;
    }
    if (!cv::imwrite(path, gray)) throw DataError("cannot write mask: " + path);
}

}  // namespace metal
