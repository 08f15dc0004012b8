#include "metal/patching.hpp"

#include <string>

#include "metal/errors.hpp"

namespace metal {

TokenSequence extract_tokens(const ImageTensor& img, const PatchShape& shape) {
    if (shape.patch_h <= 0 || shape.patch_w <= 0 || img.height % shape.patch_h != 0 ||
        img.width % shape.patch_w != 0)
        throw ShapeError("extract_tokens: patch " + std::to_string(shape.patch_h) + "x" +
                         std::to_string(shape.patch_w) + " does not divide image " +
                         std::to_string(img.height) + "x" + std::to_string(img.width));
    TokenSequence seq;
    seq.shape = shape;
    seq.grid_rows = img.height / shape.patch_h;
    seq.grid_cols = img.width / shape.patch_w;
    seq.channels = img.channels;
    const int n = seq.grid_rows * seq.grid_cols;
    const int len = img.channels * shape.patch_h * shape.patch_w;
    seq.tokens = Mat<float>(n, len);
    seq.index_map.reserve(n);
    int tok = 0;
    for (int gr = 0; gr < seq.grid_rows; ++gr) {
        for (int gc = 0; gc < seq.grid_cols; ++gc, ++tok) {
            seq.index_map.emplace_back(gr, gc);
            int k = 0;
            for (int c = 0; c < img.channels; ++c)
                for (int py = 0; py < shape.patch_h; ++py)
                    for (int px = 0; px < shape.patch_w; ++px, ++k)
                        seq.tokens(tok, k) =
                            img.at(c, gr * shape.patch_h + py, gc * shape.patch_w + px);
        }
    }
    return seq;
}

ImageTensor reassemble(const TokenSequence& seq) {
    const int expect = seq.channels * seq.shape.patch_h * seq.shape.patch_w;
    if (seq.tokens.cols != expect)
        throw ShapeError("reassemble: token length " + std::to_string(seq.tokens.cols) +
                         " inconsistent with shape (expected " + std::to_string(expect) + ")");
    if (seq.tokens.rows != static_cast<int>(seq.index_map.size()) ||
        seq.tokens.rows != seq.grid_rows * seq.grid_cols)
        throw ShapeError("reassemble: token count inconsistent with grid");
    ImageTensor img(seq.channels, seq.grid_rows * seq.shape.patch_h,
                    seq.grid_cols * seq.shape.patch_w);
    for (int tok = 0; tok < seq.tokens.rows; ++tok) {
        auto [gr, gc] = seq.index_map[tok];
        int k = 0;
        for (int c = 0; c < seq.channels; ++c)
            for (int py = 0; py < seq.shape.patch_h; ++py)
                for (int px = 0; px < seq.shape.patch_w; ++px, ++k)
                    img.at(c, gr * seq.shape.patch_h + py, gc * seq.shape.patch_w + px) =
                        seq.tokens(tok, k);
    }
    return img;
}

ContainmentMap build_containment(int image_side, int patch_side) {
    if (patch_side <= 0 || image_side % patch_side != 0)
        throw ShapeError("build_containment: patch side must divide image side");
    ContainmentMap map;
    map.grid_side = image_side / patch_side;
    const int p = map.grid_side;
    map.row_stripe_of.reserve(p * p);
    for (int r = 0; r < p; ++r) {
        for (int c = 0; c < p; ++c) {
            // square (r, c) lies in row stripe r at horizontal position c, and
            // in column stripe c at vertical position r
            map.row_stripe_of.push_back(r);
            map.col_stripe_of.push_back(c);
            map.offset_in_row_stripe.push_back(c);
            map.offset_in_col_stripe.push_back(r);
        }
    }
    return map;
}

}  // namespace metal
