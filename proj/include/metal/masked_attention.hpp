// Multi-head self-attention with the token-to-self entry removed from the
// attention matrix. NegInf masking drops the diagonal logit before the
// softmax so the self-weight is exactly zero; ZeroLogit replaces it with a
// zero logit (the literal reading, which keeps a residual self-weight).
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "metal/config.hpp"
#include "metal/errors.hpp"
#include "metal/nn_core.hpp"

namespace metal {

struct AttentionConfig {
    int embed_dim = 128;
    int num_heads = 4;
    MaskMode mask_mode = MaskMode::NegInf;
    bool diag_masked = true;

    int head_dim() const { return embed_dim / num_heads; }

    void check() const {
        if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0)
            throw ConfigError("attention: embed_dim must be a positive multiple of num_heads");
    }
};

template <class S>
struct AttentionParams {
    LinearLayer<S> wq, wk, wv, wo;

    static AttentionParams create(ParamStore<S>& store, const std::string& prefix, int dim,
                                  std::mt19937& rng) {
        AttentionParams p;
        p.wq = LinearLayer<S>::create(store, prefix + ".wq", dim, dim, rng);
        p.wk = LinearLayer<S>::create(store, prefix + ".wk", dim, dim, rng);
        p.wv = LinearLayer<S>::create(store, prefix + ".wv", dim, dim, rng);
        p.wo = LinearLayer<S>::create(store, prefix + ".wo", dim, dim, rng);
        return p;
    }
};

template <class S>
struct MhsaResult {
    Var<S> out;
    std::vector<Mat<S>> attention;  // one row-stochastic n x n matrix per head
};

// tokens: n x d. query_src: the stream the queries are projected from; equal
// to tokens in the standard configuration, or a content-free stream (the
// positional table) in the strict no-self-path configuration.
template <class S>
MhsaResult<S> masked_mhsa(Var<S> tokens, Var<S> query_src, const AttentionParams<S>& params,
                          const AttentionConfig& cfg, Tape<S>& tape) {
    cfg.check();
    const int n = tokens.rows();
    if (tokens.cols() != cfg.embed_dim) throw ShapeError("mhsa: token dim != embed_dim");
    if (query_src.rows() != n || query_src.cols() != cfg.embed_dim)
        throw ShapeError("mhsa: query source shape mismatch");
    if (cfg.diag_masked && n < 2)
        throw MaskedSoftmaxError("mhsa: a single diagonal-masked token attends to nothing");

    DiagMask diag = DiagMask::None;
    if (cfg.diag_masked)
        diag = cfg.mask_mode == MaskMode::NegInf ? DiagMask::NegInf : DiagMask::ZeroLogit;

    Var<S> q = op_linear(query_src, params.wq, tape);
    Var<S> k = op_linear(tokens, params.wk, tape);
    Var<S> v = op_linear(tokens, params.wv, tape);

    const int dk = cfg.head_dim();
    const S scale = S(1) / std::sqrt(S(dk));
    std::vector<Var<S>> head_outs;
    MhsaResult<S> res{Var<S>{}, {}};
    for (int h = 0; h < cfg.num_heads; ++h) {
        Var<S> qh = op_slice_cols(q, h * dk, (h + 1) * dk);
        Var<S> kh = op_slice_cols(k, h * dk, (h + 1) * dk);
        Var<S> vh = op_slice_cols(v, h * dk, (h + 1) * dk);
        Var<S> logits = op_affine(op_matmul(qh, kh, false, true), scale, S(0));
        Var<S> a = op_softmax_rows(logits, diag);
        res.attention.push_back(a.val());
        head_outs.push_back(op_matmul(a, vh));
    }
    Var<S> merged = cfg.num_heads == 1 ? head_outs[0] : op_concat_cols(head_outs);
    res.out = op_linear(merged, params.wo, tape);
    return res;
}

}  // namespace metal
