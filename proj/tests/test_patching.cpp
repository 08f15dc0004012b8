#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "metal/errors.hpp"
#include "metal/patching.hpp"

using namespace metal;
using metal::testing::random_image;

TEST_SUITE("patching") {

TEST_CASE("square tokens: 128x128 image, 16x16 patches -> 64 tokens of length 768") {
    ImageTensor img = random_image(3, 128, 128, 1);
    TokenSequence seq = extract_tokens(img, PatchShape::square(16));
    CHECK(seq.count() == 64);
    CHECK(seq.token_len() == 768);
    CHECK(seq.grid_rows == 8);
    CHECK(seq.grid_cols == 8);
}

TEST_CASE("row stripes: 128x128 image -> 8 tokens of length 6144") {
    ImageTensor img = random_image(3, 128, 128, 2);
    TokenSequence seq = extract_tokens(img, PatchShape::row_stripe(128, 16));
    CHECK(seq.count() == 8);
    CHECK(seq.token_len() == 6144);
    TokenSequence cols = extract_tokens(img, PatchShape::col_stripe(128, 16));
    CHECK(cols.count() == 8);
    CHECK(cols.token_len() == 6144);
}

TEST_CASE("16x16 image with 16x16 patch is one token equal to the flattened image") {
    ImageTensor img = random_image(3, 16, 16, 3);
    TokenSequence seq = extract_tokens(img, PatchShape::square(16));
    CHECK(seq.count() == 1);
    for (size_t i = 0; i < img.v.size(); ++i) CHECK(seq.tokens.a[i] == img.v[i]);
    ImageTensor back = reassemble(seq);
    CHECK(back.v == img.v);
}

TEST_CASE("round trip is bit-exact for all three shapes") {
    ImageTensor img = random_image(3, 128, 128, 4);
    for (PatchShape shape : {PatchShape::square(16), PatchShape::row_stripe(128, 16),
                             PatchShape::col_stripe(128, 16)}) {
        ImageTensor back = reassemble(extract_tokens(img, shape));
        REQUIRE(back.v.size() == img.v.size());
        CHECK(back.v == img.v);
    }
}

TEST_CASE("tokens are raster ordered and cover every pixel exactly once") {
    // paint each pixel with a unique value, then account for all of them
    ImageTensor img(3, 32, 32);
    for (size_t i = 0; i < img.v.size(); ++i) img.v[i] = float(i);
    for (PatchShape shape :
         {PatchShape::square(8), PatchShape::row_stripe(32, 8), PatchShape::col_stripe(32, 8)}) {
        TokenSequence seq = extract_tokens(img, shape);
        std::set<float> seen;
        for (float v : seq.tokens.a) seen.insert(v);
        CHECK(seen.size() == img.v.size());
        // raster order: token 0 holds the top-left pixel
        CHECK(seq.tokens(0, 0) == img.v[0]);
        CHECK(seq.index_map[0] == std::pair<int, int>{0, 0});
    }
}

TEST_CASE("dimension mismatch raises") {
    ImageTensor img = random_image(3, 100, 100, 5);
    CHECK_THROWS_AS(extract_tokens(img, PatchShape::square(16)), ShapeError);
}

TEST_CASE("reassemble rejects inconsistent token length") {
    ImageTensor img = random_image(3, 32, 32, 6);
    TokenSequence seq = extract_tokens(img, PatchShape::square(8));
    seq.tokens = Mat<float>(seq.tokens.rows, seq.tokens.cols - 1);
    CHECK_THROWS_AS(reassemble(seq), ShapeError);
}

TEST_CASE("containment: N=128 K=16, square (2,5)") {
    ContainmentMap map = build_containment(128, 16);
    const int s = 2 * 8 + 5;
    CHECK(map.row_stripe_of[s] == 2);
    CHECK(map.col_stripe_of[s] == 5);
    CHECK(map.offset_in_row_stripe[s] == 5);
    CHECK(map.offset_in_col_stripe[s] == 2);
}

TEST_CASE("containment: N=32 K=16 has 4 squares and 2 stripes per direction") {
    ContainmentMap map = build_containment(32, 16);
    CHECK(map.num_squares() == 4);
    CHECK(map.grid_side == 2);
    const int s = 1 * 2 + 0;  // square (1,0)
    CHECK(map.row_stripe_of[s] == 1);
    CHECK(map.offset_in_row_stripe[s] == 0);
}

TEST_CASE("containment: N=K degenerates to one square with offset 0") {
    ContainmentMap map = build_containment(16, 16);
    CHECK(map.num_squares() == 1);
    CHECK(map.row_stripe_of[0] == 0);
    CHECK(map.col_stripe_of[0] == 0);
    CHECK(map.offset_in_row_stripe[0] == 0);
    CHECK(map.offset_in_col_stripe[0] == 0);
}

TEST_CASE("containment is geometrically correct by brute force") {
    // every pixel of square s must lie inside row_stripe(s) and col_stripe(s)
    for (int side : {32, 48, 64}) {
        const int K = 16;
        ContainmentMap map = build_containment(side, K);
        const int G = side / K;
        for (int s = 0; s < map.num_squares(); ++s) {
            int gr = s / G, gc = s % G;
            for (int y = gr * K; y < (gr + 1) * K; ++y)
                for (int x = gc * K; x < (gc + 1) * K; ++x) {
                    CHECK(y / K == map.row_stripe_of[s]);
                    CHECK(x / K == map.col_stripe_of[s]);
                }
        }
        // offsets within any stripe are a permutation of 0..p-1
        for (int stripe = 0; stripe < G; ++stripe) {
            std::set<int> row_offsets, col_offsets;
            for (int s = 0; s < map.num_squares(); ++s) {
                if (map.row_stripe_of[s] == stripe) row_offsets.insert(map.offset_in_row_stripe[s]);
                if (map.col_stripe_of[s] == stripe) col_offsets.insert(map.offset_in_col_stripe[s]);
            }
            CHECK(row_offsets.size() == size_t(G));
            CHECK(col_offsets.size() == size_t(G));
            CHECK(*row_offsets.begin() == 0);
            CHECK(*row_offsets.rbegin() == G - 1);
        }
    }
}

}  // TEST_SUITE
