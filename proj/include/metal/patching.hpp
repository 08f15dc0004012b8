// Multi-shape patch tokenization: square patches plus full-width row stripes
// and full-height column stripes, with the spatial-containment map that binds
// each square to the stripes enclosing it.
#pragma once

#include <utility>
#include <vector>

#include "metal/image.hpp"
#include "metal/tensor.hpp"

namespace metal {

enum class PatchKind { Square, RowStripe, ColStripe };

struct PatchShape {
    PatchKind kind = PatchKind::Square;
    int patch_h = 0;
    int patch_w = 0;

    static PatchShape square(int side) { return {PatchKind::Square, side, side}; }
    static PatchShape row_stripe(int image_side, int patch_side) {
        return {PatchKind::RowStripe, patch_side, image_side};
    }
    static PatchShape col_stripe(int image_side, int patch_side) {
        return {PatchKind::ColStripe, image_side, patch_side};
    }
};

// One token per patch, raster order, each token the [c][y][x]-flattened pixels
// of its patch.
struct TokenSequence {
    PatchShape shape;
    int grid_rows = 0;
    int grid_cols = 0;
    int channels = 0;
    Mat<float> tokens;                             // n x (channels * patch_h * patch_w)
    std::vector<std::pair<int, int>> index_map;    // token index -> (row, col) grid coordinate

    int count() const { return tokens.rows; }
    int token_len() const { return tokens.cols; }
};

// For each square patch index s (raster order on the square grid): the row
// stripe and column stripe containing it, and s's segment position within
// each stripe.
struct ContainmentMap {
    int grid_side = 0;  // p = image_side / patch_side
    std::vector<int> row_stripe_of;
    std::vector<int> col_stripe_of;
    std::vector<int> offset_in_row_stripe;
    std::vector<int> offset_in_col_stripe;

    int num_squares() const { return static_cast<int>(row_stripe_of.size()); }
};

TokenSequence extract_tokens(const ImageTensor& img, const PatchShape& shape);

ImageTensor reassemble(const TokenSequence& seq);

ContainmentMap build_containment(int image_side, int patch_side);

}  // namespace metal
