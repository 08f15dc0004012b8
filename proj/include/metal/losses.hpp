// Training objective: summed L1 distance plus the negative SSIM similarity.
// Both terms are built on the tape so gradients flow to the reconstruction.
// Images enter as channel-stacked (C*H) x W matrices.
#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "metal/autodiff.hpp"
#include "metal/config.hpp"
#include "metal/errors.hpp"
#include "metal/image.hpp"

namespace metal {

struct SsimParams {
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;  // pixels live in [0,1]
    SsimMode mode = SsimMode::Windowed;
    int window = 11;
    double window_sigma = 1.5;

    double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

template <class S>
std::vector<S> gaussian_window(int taps, double sigma) {
    std::vector<S> k(taps);
    const double mid = (taps - 1) / 2.0;
    double sum = 0;
    for (int i = 0; i < taps; ++i) {
        double d = i - mid;
        double w = std::exp(-d * d / (2.0 * sigma * sigma));
        k[i] = S(w);
        sum += w;
    }
    for (auto& v : k) v = S(double(v) / sum);
    return k;
}

template <class S>
Mat<S> image_to_stacked(const ImageTensor& img) {
    Mat<S> m(img.channels * img.height, img.width);
    for (size_t i = 0; i < img.v.size(); ++i) m.a[i] = S(img.v[i]);
    return m;
}

template <class S>
ImageTensor stacked_to_image(const Mat<S>& m, int channels) {
    ImageTensor img(channels, m.rows / channels, m.cols);
    for (size_t i = 0; i < m.size(); ++i) img.v[i] = static_cast<float>(m.a[i]);
    return img;
}

// Sum (or mean) of absolute pixel differences.
template <class S>
Var<S> l1_loss(Var<S> recon, Var<S> target, LossReduction reduction = LossReduction::Sum) {
    if (!recon.val().same_shape(target.val())) throw ShapeError("l1_loss: shape mismatch");
    Var<S> d = op_abs(op_sub(recon, target));
    return reduction == LossReduction::Sum ? op_sum(d) : op_mean(d);
}

namespace detail {

// SSIM of one channel plane pair, both n(H) x W vars on the same tape.
template <class S>
Var<S> ssim_plane(Var<S> x, Var<S> y, const SsimParams& p) {
    const S c1 = S(p.c1()), c2 = S(p.c2());
    if (p.mode == SsimMode::Global) {
        Var<S> mx = op_mean(x);
        Var<S> my = op_mean(y);
        Var<S> mx2 = op_mul(mx, mx);
        Var<S> my2 = op_mul(my, my);
        Var<S> vx = op_sub(op_mean(op_mul(x, x)), mx2);
        Var<S> vy = op_sub(op_mean(op_mul(y, y)), my2);
        Var<S> cov = op_sub(op_mean(op_mul(x, y)), op_mul(mx, my));
        Var<S> num = op_mul(op_affine(op_mul(mx, my), S(2), c1), op_affine(cov, S(2), c2));
        Var<S> den = op_mul(op_affine(op_add(mx2, my2), S(1), c1),
                            op_affine(op_add(vx, vy), S(1), c2));
        return op_div(num, den);
    }
    std::vector<S> k = gaussian_window<S>(p.window, p.window_sigma);
    Var<S> mx = op_sepconv_valid(x, k);
    Var<S> my = op_sepconv_valid(y, k);
    Var<S> mx2 = op_mul(mx, mx);
    Var<S> my2 = op_mul(my, my);
    Var<S> vx = op_sub(op_sepconv_valid(op_mul(x, x), k), mx2);
    Var<S> vy = op_sub(op_sepconv_valid(op_mul(y, y), k), my2);
    Var<S> cov = op_sub(op_sepconv_valid(op_mul(x, y), k), op_mul(mx, my));
    Var<S> num = op_mul(op_affine(op_mul(mx, my), S(2), c1), op_affine(cov, S(2), c2));
    Var<S> den = op_mul(op_affine(op_add(mx2, my2), S(1), c1),
                        op_affine(op_add(vx, vy), S(1), c2));
    return op_mean(op_div(num, den));
}

}  // namespace detail

// SSIM similarity in [-1,1], computed per channel and averaged.
template <class S>
Var<S> ssim(Var<S> recon, Var<S> target, const SsimParams& p, int channels) {
    if (!recon.val().same_shape(target.val())) throw ShapeError("ssim: shape mismatch");
    if (recon.rows() % channels != 0) throw ShapeError("ssim: rows not divisible by channels");
    const int h = recon.rows() / channels;
    Var<S> acc{};
    for (int c = 0; c < channels; ++c) {
        Var<S> xc = op_slice_rows(recon, c * h, (c + 1) * h);
        Var<S> yc = op_slice_rows(target, c * h, (c + 1) * h);
        Var<S> s = detail::ssim_plane(xc, yc, p);
        acc = (c == 0) ? s : op_add(acc, s);
    }
    return channels == 1 ? acc : op_affine(acc, S(1) / S(channels), S(0));
}

// L(X, X^) = L1 - SSIM
template <class S>
Var<S> total_loss(Var<S> recon, Var<S> target, const SsimParams& p, int channels,
                  LossReduction reduction) {
    return op_sub(l1_loss(recon, target, reduction), ssim(recon, target, p, channels));
}

// Plain-number conveniences over grad-disabled tapes.
inline double l1_value(const ImageTensor& x, const ImageTensor& xhat,
                       LossReduction reduction = LossReduction::Sum) {
    Tape<float> t(false);
    Var<float> a = t.constant(image_to_stacked<float>(xhat));
    Var<float> b = t.constant(image_to_stacked<float>(x));
    return l1_loss(a, b, reduction).val()(0, 0);
}

inline double ssim_value(const ImageTensor& x, const ImageTensor& xhat, const SsimParams& p) {
    if (x.channels != xhat.channels) throw ShapeError("ssim: channel mismatch");
    Tape<float> t(false);
    Var<float> a = t.constant(image_to_stacked<float>(xhat));
    Var<float> b = t.constant(image_to_stacked<float>(x));
    return ssim(a, b, p, x.channels).val()(0, 0);
}

inline double total_loss_value(const ImageTensor& x, const ImageTensor& xhat, const SsimParams& p,
                               LossReduction reduction = LossReduction::Sum) {
    Tape<float> t(false);
    Var<float> a = t.constant(image_to_stacked<float>(xhat));
    Var<float> b = t.constant(image_to_stacked<float>(x));
    return total_loss(a, b, p, x.channels, reduction).val()(0, 0);
}

}  // namespace metal
