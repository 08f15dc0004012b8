// The full network: one branch per patch shape (embedding MLP + learned
// positional table + masked encoder), containment-aligned concatenation of
// stripe-embedding segments onto square-patch embeddings, and a shared
// per-patch MLP decoder with a sigmoid output.
#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "metal/config.hpp"
#include "metal/encoder.hpp"
#include "metal/errors.hpp"
#include "metal/losses.hpp"
#include "metal/patching.hpp"

namespace metal {

inline constexpr int kImageChannels = 3;

template <class S>
class MetalModel {
  public:
    struct Branch {
        PatchShape shape;
        MlpBlock<S> embed;
        Param<S>* pos = nullptr;
        std::vector<EncoderBlockParams<S>> blocks;
    };

    struct BranchAttention {
        std::string branch;
        std::vector<std::vector<Mat<S>>> per_block;  // [block][head], each n x n
    };

    struct ForwardResult {
        Var<S> recon;  // (channels*H) x W, values in (0,1)
        std::vector<BranchAttention> attention;
    };

    explicit MetalModel(const Config& cfg) : cfg_(cfg) {
        cfg_.validate();
        std::mt19937 rng(init_seed(cfg_.seed));
        contain_ = build_containment(cfg_.image_side, cfg_.patch_side);
        const int d = cfg_.embed_dim;
        const int p = cfg_.grid_side();
        const int n_sq = cfg_.num_squares();

        if (cfg_.has_squares())
            square_ = make_branch("square", PatchShape::square(cfg_.patch_side), n_sq, d, rng);
        if (cfg_.has_rows())
            row_ = make_branch("row", PatchShape::row_stripe(cfg_.image_side, cfg_.patch_side), p,
                               d, rng);
        if (cfg_.has_cols())
            col_ = make_branch("col", PatchShape::col_stripe(cfg_.image_side, cfg_.patch_side), p,
                               d, rng);

        const int out_len = kImageChannels * cfg_.patch_side * cfg_.patch_side;
        decoder_ = MlpBlock<S>::create(
            store_, "decoder",
            {decoder_input_dim(), cfg_.decoder_hidden, cfg_.decoder_hidden, out_len}, rng);

        build_assignments();
        build_recon_index();
        act_ = cfg_.activation == "relu" ? Activation::Relu : Activation::Gelu;
    }

    const Config& config() const { return cfg_; }
    ParamStore<S>& params() { return store_; }
    const ParamStore<S>& params() const { return store_; }
    size_t param_count() const { return store_.total_count(); }
    const ContainmentMap& containment() const { return contain_; }

    // Width of the per-square decoder input: d per square branch plus one
    // d/p segment per active stripe branch.
    int decoder_input_dim() const {
        int dim = 0;
        if (cfg_.has_squares()) dim += cfg_.embed_dim;
        if (cfg_.has_rows()) dim += cfg_.segment_len();
        if (cfg_.has_cols()) dim += cfg_.segment_len();
        return dim;
    }

    // One row per square patch: the square embedding (when present) followed
    // by the segment of each active stripe's encoded embedding at the
    // square's containment offset. Exposed so the wiring can be instrumented
    // with synthetic stripe encodings.
    Var<S> assemble_decoder_input(std::optional<Var<S>> enc_square, std::optional<Var<S>> enc_row,
                                  std::optional<Var<S>> enc_col) const {
        std::vector<Var<S>> parts;
        if (square_.has_value() != enc_square.has_value() ||
            row_.has_value() != enc_row.has_value() || col_.has_value() != enc_col.has_value())
            throw ShapeError("assemble_decoder_input: encodings do not match active branches");
        if (enc_square) parts.push_back(*enc_square);
        if (enc_row) parts.push_back(op_gather_segments(*enc_row, row_assign_, cfg_.segment_len()));
        if (enc_col) parts.push_back(op_gather_segments(*enc_col, col_assign_, cfg_.segment_len()));
        return parts.size() == 1 ? parts[0] : op_concat_cols(parts);
    }

    ForwardResult forward(const ImageTensor& img, Tape<S>& tape) const {
        if (img.channels != kImageChannels || img.height != cfg_.image_side ||
            img.width != cfg_.image_side)
            throw ShapeError("forward: image does not match configured geometry");

        AttentionConfig attn_cfg{cfg_.embed_dim, cfg_.num_heads, cfg_.mask_mode,
                                 cfg_.diag_masked()};
        EncoderConfig enc_cfg{cfg_.num_blocks, cfg_.ffn_hidden, cfg_.norm_placement,
                              cfg_.attention_residual};
        const bool strict = cfg_.attention_residual == AttentionResidual::Disabled;

        ForwardResult res{Var<S>{}, {}};
        auto run_branch = [&](const Branch& br) {
            TokenSequence seq = extract_tokens(img, br.shape);
            Mat<S> toks(seq.tokens.rows, seq.tokens.cols);
            for (size_t i = 0; i < seq.tokens.a.size(); ++i) toks.a[i] = S(seq.tokens.a[i]);
            Var<S> x = br.embed.forward(tape.constant(std::move(toks)), tape, act_);
            Var<S> pos = tape.leaf(*br.pos);
            x = op_add(x, pos);
            EncodeResult<S> enc =
                encode(x, strict ? std::optional<Var<S>>(pos) : std::optional<Var<S>>(), br.blocks,
                       enc_cfg, attn_cfg, act_, tape);
            return enc;
        };

        std::optional<Var<S>> enc_square, enc_row, enc_col;
        if (square_) {
            EncodeResult<S> enc = run_branch(*square_);
            enc_square = enc.out;
            res.attention.push_back({"square", std::move(enc.attention)});
        }
        if (row_) {
            EncodeResult<S> enc = run_branch(*row_);
            enc_row = enc.out;
            res.attention.push_back({"row", std::move(enc.attention)});
        }
        if (col_) {
            EncodeResult<S> enc = run_branch(*col_);
            enc_col = enc.out;
            res.attention.push_back({"col", std::move(enc.attention)});
        }

        Var<S> dec_in = assemble_decoder_input(enc_square, enc_row, enc_col);
        Var<S> dec = op_sigmoid(decoder_.forward(dec_in, tape, act_));
        res.recon = op_permute_flat(dec, recon_index_, kImageChannels * cfg_.image_side,
                                    cfg_.image_side);
        return res;
    }

    // Named inference entry point: the reconstruction produced patch by patch.
    ImageTensor reconstruct_patchwise(const ImageTensor& img) const {
        Tape<S> tape(false);
        ForwardResult r = forward(img, tape);
        return stacked_to_image(r.recon.val(), kImageChannels);
    }

  private:
    static uint32_t init_seed(uint64_t seed) {
        return static_cast<uint32_t>(seed ^ (seed >> 32) ^ 0x6d2b79f5u);
    }

    Branch make_branch(const std::string& name, PatchShape shape, int token_count, int d,
                       std::mt19937& rng) {
        Branch br;
        br.shape = shape;
        const int token_len = kImageChannels * shape.patch_h * shape.patch_w;
        br.embed = MlpBlock<S>::create(store_, name + ".patch_embed", {token_len, d, d}, rng);
        br.pos = &store_.add(name + ".pos_embed", token_count, d);
        init_trunc_normal(br.pos->value, rng);
        for (int b = 0; b < cfg_.num_blocks; ++b)
            br.blocks.push_back(EncoderBlockParams<S>::create(
                store_, name + ".enc" + std::to_string(b), d, cfg_.ffn_hidden, rng));
        return br;
    }

    void build_assignments() {
        auto ra = std::make_shared<std::vector<std::pair<int, int>>>();
        auto ca = std::make_shared<std::vector<std::pair<int, int>>>();
        for (int s = 0; s < contain_.num_squares(); ++s) {
            ra->emplace_back(contain_.row_stripe_of[s], contain_.offset_in_row_stripe[s]);
            ca->emplace_back(contain_.col_stripe_of[s], contain_.offset_in_col_stripe[s]);
        }
        row_assign_ = std::move(ra);
        col_assign_ = std::move(ca);
    }

    void build_recon_index() {
        const int H = cfg_.image_side, W = cfg_.image_side, K = cfg_.patch_side;
        const int G = cfg_.grid_side();
        auto idx = std::make_shared<std::vector<int>>(static_cast<size_t>(kImageChannels) * H * W);
        const int patch_len = kImageChannels * K * K;
        for (int c = 0; c < kImageChannels; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    int s = (y / K) * G + (x / K);
                    int k = c * K * K + (y % K) * K + (x % K);
                    (*idx)[(static_cast<size_t>(c) * H + y) * W + x] = s * patch_len + k;
                }
        recon_index_ = std::move(idx);
    }

    Config cfg_;
    ParamStore<S> store_;
    std::optional<Branch> square_, row_, col_;
    MlpBlock<S> decoder_;
    ContainmentMap contain_;
    std::shared_ptr<const std::vector<std::pair<int, int>>> row_assign_, col_assign_;
    std::shared_ptr<const std::vector<int>> recon_index_;
    Activation act_ = Activation::Gelu;
};

// Maximum absolute change of square patch `square_idx`'s reconstruction when
// that patch's pixels are replaced by uniform noise. Zero means the patch is
// reconstructed from external information only.
template <class S>
double measure_leakage(const MetalModel<S>& model, const ImageTensor& img, int square_idx,
                       std::mt19937& rng) {
    const Config& cfg = model.config();
    const int K = cfg.patch_side, G = cfg.grid_side();
    const int gr = square_idx / G, gc = square_idx % G;
    ImageTensor base = model.reconstruct_patchwise(img);
    ImageTensor perturbed = img;
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    for (int c = 0; c < img.channels; ++c)
        for (int y = gr * K; y < (gr + 1) * K; ++y)
            for (int x = gc * K; x < (gc + 1) * K; ++x) perturbed.at(c, y, x) = uni(rng);
    ImageTensor other = model.reconstruct_patchwise(perturbed);
    double worst = 0;
    for (int c = 0; c < img.channels; ++c)
        for (int y = gr * K; y < (gr + 1) * K; ++y)
            for (int x = gc * K; x < (gc + 1) * K; ++x)
                worst = std::max(worst,
                                 std::abs(double(base.at(c, y, x)) - double(other.at(c, y, x))));
    return worst;
}

}  // namespace metal
