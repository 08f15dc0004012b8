#pragma once

#include <random>

#include "metal/autodiff.hpp"
#include "metal/image.hpp"

namespace metal::testing {

inline ImageTensor random_image(int channels, int h, int w, uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ImageTensor img(channels, h, w);
    for (auto& v : img.v) v = u(rng);
    return img;
}

template <class S>
Mat<S> random_mat(int rows, int cols, uint32_t seed, S lo = S(-1), S hi = S(1)) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u{double(lo), double(hi)};
    Mat<S> m(rows, cols);
    for (auto& v : m.a) v = S(u(rng));
    return m;
}

// Central finite differences of `loss_value` w.r.t. every entry of `p`,
// compared against `analytic`; returns the worst relative error.
template <class LossFn>
double max_fd_error(Param<double>& p, const Mat<double>& analytic, LossFn loss_value,
                    double h = 1e-4) {
    double worst = 0;
    for (size_t k = 0; k < p.value.size(); ++k) {
        double orig = p.value.a[k];
        p.value.a[k] = orig + h;
        double f1 = loss_value();
        p.value.a[k] = orig - h;
        double f0 = loss_value();
        p.value.a[k] = orig;
        double fd = (f1 - f0) / (2 * h);
        double a = analytic.a[k];
        double denom = std::max({1e-6, std::abs(a), std::abs(fd)});
        worst = std::max(worst, std::abs(a - fd) / denom);
    }
    return worst;
}

}  // namespace metal::testing
