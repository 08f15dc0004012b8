#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "metal/masked_attention.hpp"

using namespace metal;
using metal::testing::random_mat;

namespace {

struct Fixture {
    ParamStore<double> store;
    AttentionParams<double> params;
    AttentionConfig cfg;

    Fixture(int d, int heads, MaskMode mode, bool masked, uint32_t seed) {
        std::mt19937 rng(seed);
        params = AttentionParams<double>::create(store, "attn", d, rng);
        cfg = AttentionConfig{d, heads, mode, masked};
    }
};

// scalar re-derivation of one attention head's row-softmax logits
Mat<double> oracle_logits(const Mat<double>& tokens, const AttentionParams<double>& p, int head,
                          int dk) {
    auto project = [&](const LinearLayer<double>& l) {
        Mat<double> out(tokens.rows, l.out_dim());
        for (int r = 0; r < tokens.rows; ++r)
            for (int o = 0; o < l.out_dim(); ++o) {
                double s = l.bias->value(0, o);
                for (int i = 0; i < l.in_dim(); ++i) s += l.weight->value(o, i) * tokens(r, i);
                out(r, o) = s;
            }
        return out;
    };
    Mat<double> q = project(p.wq), k = project(p.wk);
    Mat<double> s(tokens.rows, tokens.rows);
    for (int i = 0; i < tokens.rows; ++i)
        for (int j = 0; j < tokens.rows; ++j) {
            double dot = 0;
            for (int c = head * dk; c < (head + 1) * dk; ++c) dot += q(i, c) * k(j, c);
            s(i, j) = dot / std::sqrt(double(dk));
        }
    return s;
}

}  // namespace

TEST_SUITE("masked_attention") {

TEST_CASE("n=2 with NegInf masking: attention is exactly [[0,1],[1,0]]") {
    for (uint32_t seed : {1u, 2u, 3u}) {
        Fixture f(8, 2, MaskMode::NegInf, true, seed);
        Tape<double> t;
        Var<double> x = t.constant(random_mat<double>(2, 8, seed + 100));
        MhsaResult<double> r = masked_mhsa(x, x, f.params, f.cfg, t);
        for (const auto& a : r.attention) {
            CHECK(a(0, 0) == 0.0);
            CHECK(a(1, 1) == 0.0);
            CHECK(a(0, 1) == 1.0);
            CHECK(a(1, 0) == 1.0);
        }
    }
}

TEST_CASE("n=3 identical tokens: off-diagonal weights are exactly 0.5") {
    Fixture f(8, 2, MaskMode::NegInf, true, 4);
    Tape<double> t;
    Mat<double> x(3, 8);
    Mat<double> row = random_mat<double>(1, 8, 5);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 8; ++c) x(r, c) = row(0, c);
    MhsaResult<double> res = masked_mhsa(t.constant(x), t.constant(x), f.params, f.cfg, t);
    for (const auto& a : res.attention)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                CHECK(a(i, j) == doctest::Approx(i == j ? 0.0 : 0.5).epsilon(1e-12));
}

TEST_CASE("ZeroLogit keeps a residual self-weight matching the scalar oracle") {
    Fixture f(8, 2, MaskMode::ZeroLogit, true, 6);
    Tape<double> t;
    Mat<double> x = random_mat<double>(3, 8, 7);
    MhsaResult<double> res = masked_mhsa(t.constant(x), t.constant(x), f.params, f.cfg, t);
    const int dk = 4;
    for (int h = 0; h < 2; ++h) {
        Mat<double> s = oracle_logits(x, f.params, h, dk);
        const auto& a = res.attention[h];
        for (int i = 0; i < 3; ++i) {
            double denom = 1.0;  // exp(0) for the replaced diagonal logit
            for (int j = 0; j < 3; ++j)
                if (j != i) denom += std::exp(s(i, j));
            CHECK(a(i, i) == doctest::Approx(1.0 / denom).epsilon(1e-9));
            CHECK(a(i, i) > 0.0);
        }
    }
}

TEST_CASE("single diagonal-masked token raises the masked-singleton error") {
    Fixture f(8, 2, MaskMode::NegInf, true, 8);
    Tape<double> t;
    Var<double> x = t.constant(random_mat<double>(1, 8, 9));
    CHECK_THROWS_AS(masked_mhsa(x, x, f.params, f.cfg, t), MaskedSoftmaxError);
}

TEST_CASE("NegInf diagonal is exactly zero and rows are stochastic across sizes") {
    Fixture f(16, 4, MaskMode::NegInf, true, 10);
    for (int n : {2, 3, 5, 16, 33}) {
        Tape<double> t;
        Var<double> x = t.constant(random_mat<double>(n, 16, 200 + n));
        MhsaResult<double> r = masked_mhsa(x, x, f.params, f.cfg, t);
        for (const auto& a : r.attention)
            for (int i = 0; i < n; ++i) {
                CHECK(a(i, i) == 0.0);
                double s = 0;
                for (int j = 0; j < n; ++j) s += a(i, j);
                CHECK(std::abs(s - 1.0) < 1e-6);
            }
    }
}

TEST_CASE("attention is permutation equivariant") {
    Fixture f(8, 2, MaskMode::NegInf, true, 11);
    const int n = 6;
    Mat<double> x = random_mat<double>(n, 8, 12);
    std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    Mat<double> xp(n, 8);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < 8; ++c) xp(r, c) = x(perm[r], c);

    Tape<double> t;
    Var<double> vx = t.constant(x);
    Var<double> vxp = t.constant(xp);
    MhsaResult<double> base = masked_mhsa(vx, vx, f.params, f.cfg, t);
    MhsaResult<double> permuted = masked_mhsa(vxp, vxp, f.params, f.cfg, t);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < 8; ++c)
            CHECK(permuted.out.val()(r, c) ==
                  doctest::Approx(base.out.val()(perm[r], c)).epsilon(1e-9));
}

TEST_CASE("gradient w.r.t. masked logit positions is exactly zero") {
    for (DiagMask mode : {DiagMask::NegInf, DiagMask::ZeroLogit}) {
        ParamStore<double> store;
        Param<double>& logits = store.add("s", 5, 5);
        logits.value = random_mat<double>(5, 5, 13);
        Tape<double> t;
        Var<double> a = op_softmax_rows(t.leaf(logits), mode);
        Var<double> loss = op_sum(op_mul(a, t.constant(random_mat<double>(5, 5, 14))));
        t.backward(loss);
        bool any_off_diag = false;
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) {
                if (i == j)
                    CHECK(logits.grad(i, j) == 0.0);
                else if (logits.grad(i, j) != 0.0)
                    any_off_diag = true;
            }
        CHECK(any_off_diag);
    }
}

}  // TEST_SUITE
