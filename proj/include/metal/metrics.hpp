// ROC construction and the normalized partial AUROC up to an FPR cap, at
// pixel level (pooled over a class's test set, with the per-image-mean
// variant reported alongside) and at image level.
#pragma once

#include <string>
#include <vector>

#include "metal/image.hpp"
#include "metal/tensor.hpp"

namespace metal {

struct RocResult {
    std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0,0) .. (1,1)
    double partial_auc_normalized = 0.0;
    double fpr_cap = 0.3;
};

// Standard ROC by descending score thresholds; tied scores collapse into one
// threshold step. Throws DataError unless both classes are present.
std::vector<std::pair<double, double>> roc(const std::vector<double>& scores,
                                           const std::vector<uint8_t>& labels);

// Trapezoidal area over fpr in [0, cap] (tpr linearly interpolated at the
// cap), divided by cap.
double partial_auroc(const std::vector<std::pair<double, double>>& points, double fpr_cap);

RocResult roc_with_partial_auc(const std::vector<double>& scores,
                               const std::vector<uint8_t>& labels, double fpr_cap);

struct PixelEvalResult {
    RocResult pooled;            // all test pixels of the class as one population
    double per_image_mean = 0;   // mean of per-image partial AUROCs (two-class images only)
    int per_image_count = 0;     // images that contributed to the mean
    size_t n_pixels = 0;
};

PixelEvalResult pixel_level_eval(const std::vector<Mat<float>>& maps,
                                 const std::vector<BinaryMask>& masks, double fpr_cap);

struct EvalReport {
    std::string class_name;
    int n_images = 0;
    double fpr_cap = 0.3;
    double pooled_partial_auroc = -1;     // -1 when pixel metrics unavailable
    double per_image_mean_partial = -1;
    double image_level_auroc = -1;        // -1 when test set is single-class
    double sigma = 0;
    std::string combo;
    uint64_t seed = 0;

    std::string to_text() const;
    std::string to_csv() const;  // header + one row
};

}  // namespace metal
