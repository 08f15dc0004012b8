#include <doctest.h>

#include "helpers.hpp"
#include "metal/encoder.hpp"

using namespace metal;
using metal::testing::random_mat;

namespace {

struct Fixture {
    ParamStore<double> store;
    std::vector<EncoderBlockParams<double>> blocks;
    AttentionConfig attn_cfg;
    EncoderConfig enc_cfg;

    Fixture(int d, int heads, int num_blocks, AttentionResidual res, uint32_t seed) {
        std::mt19937 rng(seed);
        for (int b = 0; b < num_blocks; ++b)
            blocks.push_back(EncoderBlockParams<double>::create(store, "enc" + std::to_string(b),
                                                                d, 2 * d, rng));
        attn_cfg = AttentionConfig{d, heads, MaskMode::NegInf, true};
        enc_cfg = EncoderConfig{num_blocks, 2 * d, NormPlacement::PreNorm, res};
    }
};

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("zeroed output projections make the block an identity map") {
    Fixture f(8, 2, 2, AttentionResidual::Standard, 1);
    for (auto& blk : f.blocks) {
        blk.attn.wo.weight->value.fill(0);
        blk.attn.wo.bias->value.fill(0);
        blk.ffn.layers.back().weight->value.fill(0);
        blk.ffn.layers.back().bias->value.fill(0);
    }
    Tape<double> t;
    Mat<double> x = random_mat<double>(5, 8, 2);
    EncodeResult<double> r =
        encode(t.constant(x), std::optional<Var<double>>(), f.blocks, f.enc_cfg, f.attn_cfg, Activation::Gelu, t);
    for (size_t k = 0; k < x.size(); ++k) CHECK(r.out.val().a[k] == x.a[k]);
}

TEST_CASE("shape is preserved for any block count") {
    for (int nb : {1, 2, 3}) {
        Fixture f(8, 2, nb, AttentionResidual::Standard, 3);
        Tape<double> t;
        EncodeResult<double> r = encode(t.constant(random_mat<double>(7, 8, 4)), std::optional<Var<double>>(),
                                        f.blocks, f.enc_cfg, f.attn_cfg, Activation::Gelu, t);
        CHECK(r.out.rows() == 7);
        CHECK(r.out.cols() == 8);
        CHECK(r.attention.size() == size_t(nb));
    }
}

TEST_CASE("strict config: token 0's output ignores token 0's content (1 block)") {
    Fixture f(8, 2, 1, AttentionResidual::Disabled, 5);
    Mat<double> pos = random_mat<double>(4, 8, 6);
    Mat<double> content = random_mat<double>(4, 8, 7);
    auto run = [&](const Mat<double>& c) {
        Tape<double> t;
        Mat<double> x = c;
        for (size_t k = 0; k < x.size(); ++k) x.a[k] += pos.a[k];
        EncodeResult<double> r = encode(t.constant(x), std::optional<Var<double>>(t.constant(pos)),
                                        f.blocks, f.enc_cfg, f.attn_cfg, Activation::Gelu, t);
        return r.out.val();
    };
    Mat<double> base = run(content);
    Mat<double> perturbed_content = content;
    for (int c = 0; c < 8; ++c) perturbed_content(0, c) += 0.5 + 0.1 * c;
    Mat<double> out = run(perturbed_content);
    for (int c = 0; c < 8; ++c) CHECK(std::abs(out(0, c) - base(0, c)) < 1e-12);
    // other rows do change
    double diff = 0;
    for (int r = 1; r < 4; ++r)
        for (int c = 0; c < 8; ++c) diff = std::max(diff, std::abs(out(r, c) - base(r, c)));
    CHECK(diff > 1e-6);
}

TEST_CASE("two blocks reintroduce a second-order path to self") {
    Fixture f(8, 2, 2, AttentionResidual::Disabled, 8);
    Mat<double> pos = random_mat<double>(4, 8, 9);
    Mat<double> content = random_mat<double>(4, 8, 10);
    auto run = [&](const Mat<double>& c) {
        Tape<double> t;
        Mat<double> x = c;
        for (size_t k = 0; k < x.size(); ++k) x.a[k] += pos.a[k];
        EncodeResult<double> r = encode(t.constant(x), std::optional<Var<double>>(t.constant(pos)),
                                        f.blocks, f.enc_cfg, f.attn_cfg, Activation::Gelu, t);
        return r.out.val();
    };
    Mat<double> base = run(content);
    Mat<double> perturbed = content;
    for (int c = 0; c < 8; ++c) perturbed(0, c) += 0.4 + 0.2 * c;
    Mat<double> out = run(perturbed);
    double diff = 0;
    for (int c = 0; c < 8; ++c) diff = std::max(diff, std::abs(out(0, c) - base(0, c)));
    CHECK(diff > 1e-9);
}

TEST_CASE("post-norm placement runs and preserves shape") {
    Fixture f(8, 2, 1, AttentionResidual::Standard, 11);
    f.enc_cfg.norm_placement = NormPlacement::PostNorm;
    Tape<double> t;
    EncodeResult<double> r = encode(t.constant(random_mat<double>(4, 8, 12)), std::optional<Var<double>>(),
                                    f.blocks, f.enc_cfg, f.attn_cfg, Activation::Gelu, t);
    CHECK(r.out.rows() == 4);
    CHECK(r.out.cols() == 8);
}

}  // TEST_SUITE
