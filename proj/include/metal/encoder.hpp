// Stack of ViT encoder blocks: masked MHSA sublayer + feed-forward sublayer,
// residual connections and layer norms per the configured placement.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metal/masked_attention.hpp"

namespace metal {

struct EncoderConfig {
    int num_blocks = 1;
    int ffn_hidden = 512;
    NormPlacement norm_placement = NormPlacement::PreNorm;
    AttentionResidual attention_residual = AttentionResidual::Standard;
};

template <class S>
struct EncoderBlockParams {
    AttentionParams<S> attn;
    LayerNormParams<S> norm1, norm2;
    MlpBlock<S> ffn;

    static EncoderBlockParams create(ParamStore<S>& store, const std::string& prefix, int dim,
                                     int ffn_hidden, std::mt19937& rng) {
        EncoderBlockParams b;
        b.attn = AttentionParams<S>::create(store, prefix + ".attn", dim, rng);
        b.norm1 = LayerNormParams<S>::create(store, prefix + ".norm1", dim);
        b.norm2 = LayerNormParams<S>::create(store, prefix + ".norm2", dim);
        b.ffn = MlpBlock<S>::create(store, prefix + ".ffn", {dim, ffn_hidden, dim}, rng);
        return b;
    }
};

template <class S>
struct EncodeResult {
    Var<S> out;
    std::vector<std::vector<Mat<S>>> attention;  // [block][head]
};

// strict_query_src: when present (the Disabled-attention-residual
// configuration), queries in every block are projected from this
// content-free stream instead of the token stream, so no computational path
// leads from a token's content to its own attention row.
template <class S>
EncodeResult<S> encode(Var<S> tokens, std::optional<Var<S>> strict_query_src,
                       const std::vector<EncoderBlockParams<S>>& blocks, const EncoderConfig& cfg,
                       const AttentionConfig& attn_cfg, Activation act, Tape<S>& tape) {
    EncodeResult<S> res{tokens, {}};
    Var<S> x = tokens;
    for (const auto& blk : blocks) {
        const bool residual = cfg.attention_residual == AttentionResidual::Standard;
        MhsaResult<S> mh{Var<S>{}, {}};
        if (cfg.norm_placement == NormPlacement::PreNorm) {
            Var<S> u = op_layer_norm(x, blk.norm1, tape);
            Var<S> qsrc = strict_query_src ? op_layer_norm(*strict_query_src, blk.norm1, tape) : u;
            mh = masked_mhsa(u, qsrc, blk.attn, attn_cfg, tape);
            x = residual ? op_add(x, mh.out) : mh.out;
            Var<S> w = op_layer_norm(x, blk.norm2, tape);
            x = op_add(x, blk.ffn.forward(w, tape, act));
        } else {
            Var<S> qsrc = strict_query_src ? *strict_query_src : x;
            mh = masked_mhsa(x, qsrc, blk.attn, attn_cfg, tape);
            x = op_layer_norm(residual ? op_add(x, mh.out) : mh.out, blk.norm1, tape);
            x = op_layer_norm(op_add(x, blk.ffn.forward(x, tape, act)), blk.norm2, tape);
        }
        res.attention.push_back(std::move(mh.attention));
    }
    res.out = x;
    return res;
}

}  // namespace metal
