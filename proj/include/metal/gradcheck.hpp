// Finite-difference verification of the reverse-mode gradients: a composite
// check touching every primitive op, and a whole-model check of the total
// loss. Runs in double precision.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "metal/losses.hpp"
#include "metal/metal_model.hpp"

namespace metal {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0;
    bool pass(double tol = 1e-3) const { return max_rel_err < tol; }
};

namespace detail {

inline Mat<double> gc_random(int rows, int cols, std::mt19937& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Mat<double> m(rows, cols);
    for (auto& v : m.a) v = u(rng);
    return m;
}

template <class LossFn>
double gc_max_err(Param<double>& p, const Mat<double>& analytic, LossFn loss_value,
                  int max_entries, std::mt19937& rng, double h = 1e-4) {
    std::vector<size_t> picks;
    const size_t n = p.value.size();
    if (max_entries <= 0 || size_t(max_entries) >= n) {
        picks.resize(n);
        for (size_t i = 0; i < n; ++i) picks[i] = i;
    } else {
        std::uniform_int_distribution<size_t> u(0, n - 1);
        for (int i = 0; i < max_entries; ++i) picks.push_back(u(rng));
    }
    // Central differences at step h resolve directional derivatives down to
    // roughly 1e-8 of the loss magnitude (truncation + cancellation); the
    // denominator floor keeps gradients below that resolution from turning
    // oracle noise into reported error.
    const double floor = 1e-7 * std::max(1.0, std::abs(loss_value()));
    double worst = 0;
    for (size_t k : picks) {
        double orig = p.value.a[k];
        p.value.a[k] = orig + h;
        double f1 = loss_value();
        p.value.a[k] = orig - h;
        double f0 = loss_value();
        p.value.a[k] = orig;
        double fd = (f1 - f0) / (2 * h);
        double a = analytic.a[k];
        double denom = std::max({floor, std::abs(a), std::abs(fd)});
        worst = std::max(worst, std::abs(a - fd) / denom);
    }
    return worst;
}

}  // namespace detail

// Composite graph exercising every primitive; checks d(loss)/d(inputs).
inline GradCheckResult gradcheck_primitives(uint64_t seed = 1) {
    std::mt19937 rng(static_cast<uint32_t>(seed));
    ParamStore<double> store;
    Param<double>& a = store.add("a", 6, 6);
    a.value = detail::gc_random(6, 6, rng, 1.0, 2.0);
    Param<double>& b = store.add("b", 6, 6);
    b.value = detail::gc_random(6, 6, rng, 2.0, 3.0);
    Param<double>& bias = store.add("bias", 1, 6);
    bias.value = detail::gc_random(1, 6, rng, -0.5, 0.5);
    Mat<double> readout = detail::gc_random(5, 8, rng, -1.0, 1.0);

    auto build = [&](Tape<double>& t) {
        Var<double> va = t.leaf(a);
        Var<double> vb = t.leaf(b);
        Var<double> m1 = op_matmul(va, vb);
        Var<double> m2 = op_matmul(va, vb, false, true);
        Var<double> m3 = op_matmul(va, vb, true, false);
        Var<double> m4 = op_matmul(va, vb, true, true);
        Var<double> mix = op_add(op_sub(m1, m2), op_mul(m3, op_affine(m4, 0.1, 0.0)));
        mix = op_add_rowvec(mix, t.leaf(bias));
        mix = op_add(op_gelu(mix), op_sigmoid(op_relu(mix)));
        Var<double> sm = op_softmax_rows(op_affine(mix, 0.3, 0.0), DiagMask::NegInf);
        Var<double> cat = op_concat_cols(std::vector<Var<double>>{sm, op_div(va, vb)});
        Var<double> sl = op_slice_rows(op_slice_cols(cat, 2, 10), 0, 5);
        auto assign = std::make_shared<std::vector<std::pair<int, int>>>(
            std::vector<std::pair<int, int>>{{0, 1}, {2, 0}, {4, 3}, {1, 2}});
        Var<double> gath = op_gather_segments(op_slice_rows(cat, 0, 6), assign, 2);
        auto perm = std::make_shared<std::vector<int>>();
        for (int i = 7; i >= 0; --i) perm->push_back(i);
        Var<double> pm = op_permute_flat(gath, perm, 2, 4);
        Var<double> cv = op_sepconv_valid(sl, std::vector<double>{0.25, 0.5, 0.25});
        Var<double> agg = op_add(op_sum(op_abs(cv)), op_mean(op_mul(pm, pm)));
        return op_add(agg, op_sum(op_mul(sl, t.constant(readout))));
    };
    auto loss_value = [&]() {
        Tape<double> t(false);
        return build(t).val()(0, 0);
    };
    store.zero_grads();
    {
        Tape<double> t;
        t.backward(build(t));
    }
    GradCheckResult res{"primitives", 0};
    std::mt19937 pick_rng(static_cast<uint32_t>(seed) + 1);
    res.max_rel_err = std::max(
        {detail::gc_max_err(a, a.grad, loss_value, 0, pick_rng),
         detail::gc_max_err(b, b.grad, loss_value, 0, pick_rng),
         detail::gc_max_err(bias, bias.grad, loss_value, 0, pick_rng)});
    return res;
}

// d(total_loss)/d(every model parameter) against central finite differences.
// max_entries_per_param == 0 sweeps every entry.
inline GradCheckResult gradcheck_model(const Config& cfg, SsimMode ssim_mode,
                                       int max_entries_per_param, uint64_t seed = 1) {
    MetalModel<double> model(cfg);
    std::mt19937 rng(static_cast<uint32_t>(seed) + 7);
    // Re-randomize at a larger scale than the training init: every path then
    // carries gradients well above the finite-difference noise floor.
    std::uniform_real_distribution<double> w(-0.15, 0.15);
    for (const auto& p : model.params().all())
        for (auto& v : p->value.a) v = w(rng);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ImageTensor img(kImageChannels, cfg.image_side, cfg.image_side);
    for (auto& v : img.v) v = u(rng);

    // Loss target displaced >= 0.25 from the reconstruction so central
    // differences never straddle the |.| kink of the L1 term.
    Mat<double> target_mat;
    {
        ImageTensor recon = model.reconstruct_patchwise(img);
        ImageTensor target = recon;
        for (auto& v : target.v) v = v > 0.5f ? v - 0.25f : v + 0.25f;
        target_mat = image_to_stacked<double>(target);
    }

    SsimParams sp;
    sp.mode = ssim_mode;
    LossReduction red = cfg.l1_reduction == "mean" ? LossReduction::Mean : LossReduction::Sum;
    auto loss_value = [&]() {
        Tape<double> t(false);
        auto fwd = model.forward(img, t);
        return total_loss(fwd.recon, t.constant(target_mat), sp, kImageChannels, red).val()(0, 0);
    };

    for (const auto& p : model.params().all()) p->zero_grad();
    {
        Tape<double> t;
        auto fwd = model.forward(img, t);
        t.backward(total_loss(fwd.recon, t.constant(target_mat), sp, kImageChannels, red));
    }

    GradCheckResult res{std::string("model_loss_") + to_string(ssim_mode), 0};
    for (const auto& p : model.params().all()) {
        double err = detail::gc_max_err(*p, p->grad, loss_value, max_entries_per_param, rng);
        res.max_rel_err = std::max(res.max_rel_err, err);
    }
    return res;
}

// Geometry small enough to sweep exhaustively.
inline Config gradcheck_default_config() {
    Config cfg;
    cfg.image_side = 32;
    cfg.patch_side = 8;
    cfg.embed_dim = 16;
    cfg.num_heads = 2;
    cfg.num_blocks = 1;
    cfg.ffn_hidden = 32;
    cfg.decoder_hidden = 32;
    cfg.combo = ShapeCombo::SquaresRowsCols;
    cfg.seed = 3;
    return cfg;
}

}  // namespace metal
