#include "metal/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "metal/errors.hpp"

namespace metal {

std::vector<std::pair<double, double>> roc(const std::vector<double>& scores,
                                           const std::vector<uint8_t>& labels) {
    if (scores.size() != labels.size()) throw ShapeError("roc: scores/labels length mismatch");
    size_t pos = 0;
    for (uint8_t l : labels) pos += (l != 0);
    size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0)
        throw DataError("roc: needs both classes (got " + std::to_string(pos) + " positive, " +
                        std::to_string(neg) + " negative)");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    std::vector<std::pair<double, double>> points;
    points.reserve(scores.size() + 2);
    points.emplace_back(0.0, 0.0);
    size_t tp = 0, fp = 0, i = 0;
    while (i < order.size()) {
        double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            if (labels[order[i]]) ++tp; else ++fp;
            ++i;
        }
        points.emplace_back(double(fp) / double(neg), double(tp) / double(pos));
    }
    return points;
}

double partial_auroc(const std::vector<std::pair<double, double>>& points, double fpr_cap) {
    if (!(fpr_cap > 0.0 && fpr_cap <= 1.0)) throw ConfigError("partial_auroc: cap must be in (0,1]");
    if (points.size() < 2) throw ShapeError("partial_auroc: too few points");
    double area = 0;
    for (size_t i = 1; i < points.size(); ++i) {
        auto [f0, t0] = points[i - 1];
        auto [f1, t1] = points[i];
        if (f0 >= fpr_cap) break;
        if (f1 <= fpr_cap) {
            area += (f1 - f0) * (t0 + t1) / 2.0;
        } else {
            // linear interpolation of tpr at the cap
            double tc = t0 + (t1 - t0) * (fpr_cap - f0) / (f1 - f0);
            area += (fpr_cap - f0) * (t0 + tc) / 2.0;
            break;
        }
    }
    return area / fpr_cap;
}

RocResult roc_with_partial_auc(const std::vector<double>& scores,
                               const std::vector<uint8_t>& labels, double fpr_cap) {
    RocResult r;
    r.points = roc(scores, labels);
    r.fpr_cap = fpr_cap;
    r.partial_auc_normalized = partial_auroc(r.points, fpr_cap);
    return r;
}

PixelEvalResult pixel_level_eval(const std::vector<Mat<float>>& maps,
                                 const std::vector<BinaryMask>& masks, double fpr_cap) {
    if (maps.size() != masks.size()) throw ShapeError("pixel_level_eval: maps/masks count differ");
    PixelEvalResult res;
    std::vector<double> pooled_scores;
    std::vector<uint8_t> pooled_labels;
    double per_image_sum = 0;
    int per_image_n = 0;
    for (size_t i = 0; i < maps.size(); ++i) {
        const Mat<float>& m = maps[i];
        const BinaryMask& g = masks[i];
        if (m.rows != g.height || m.cols != g.width)
            throw ShapeError("pixel_level_eval: map/mask shape mismatch at image " +
                             std::to_string(i));
        std::vector<double> s(m.size());
        std::vector<uint8_t> l(m.size());
        for (size_t k = 0; k < m.size(); ++k) {
            s[k] = m.a[k];
            l[k] = g.v[k] ? 1 : 0;
        }
        pooled_scores.insert(pooled_scores.end(), s.begin(), s.end());
        pooled_labels.insert(pooled_labels.end(), l.begin(), l.end());
        size_t pos = 0;
        for (uint8_t x : l) pos += x;
        if (pos > 0 && pos < l.size()) {
            per_image_sum += partial_auroc(roc(s, l), fpr_cap);
            ++per_image_n;
        }
    }
    res.n_pixels = pooled_scores.size();
    res.pooled = roc_with_partial_auc(pooled_scores, pooled_labels, fpr_cap);
    res.per_image_count = per_image_n;
    res.per_image_mean = per_image_n > 0 ? per_image_sum / per_image_n : -1;
    return res;
}

namespace {

std::string fmt_metric(double v) {
    if (v < 0) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << "class:                      " << class_name << "\n"
       << "test images:                " << n_images << "\n"
       << "fpr cap:                    " << fpr_cap << "\n"
       << "pixel pAUROC (pooled):      " << fmt_metric(pooled_partial_auroc) << "\n"
       << "pixel pAUROC (image mean):  " << fmt_metric(per_image_mean_partial) << "\n"
       << "image-level AUROC:          " << fmt_metric(image_level_auroc) << "\n"
       << "sigma:                      " << sigma << "\n"
       << "combo:                      " << combo << "\n"
       << "seed:                       " << seed << "\n";
    return os.str();
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "class,n_images,fpr_cap,pixel_pauroc_pooled,pixel_pauroc_image_mean,image_auroc,sigma,"
          "combo,seed\n";
    os << class_name << "," << n_images << "," << fpr_cap << "," << fmt_metric(pooled_partial_auroc)
       << "," << fmt_metric(per_image_mean_partial) << "," << fmt_metric(image_level_auroc) << ","
       << sigma << "," << combo << "," << seed << "\n";
    return os.str();
}

}  // namespace metal
