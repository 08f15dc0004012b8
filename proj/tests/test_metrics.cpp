#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "metal/errors.hpp"
#include "metal/metrics.hpp"

using namespace metal;

namespace {

// pairwise-rank estimate of the full AUROC (Mann-Whitney with tie credit 1/2)
double rank_auc(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
    double wins = 0;
    size_t pos = 0, neg = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        ++pos;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    for (uint8_t l : labels) neg += (l == 0);
    return wins / (double(pos) * double(neg));
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("hand-traced 4-point curve") {
    std::vector<double> scores{0.9, 0.8, 0.3, 0.2};
    std::vector<uint8_t> labels{1, 1, 0, 0};
    auto pts = roc(scores, labels);
    std::vector<std::pair<double, double>> expect{{0, 0}, {0, 0.5}, {0, 1}, {0.5, 1}, {1, 1}};
    REQUIRE(pts.size() == expect.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        CHECK(pts[i].first == doctest::Approx(expect[i].first));
        CHECK(pts[i].second == doctest::Approx(expect[i].second));
    }
}

TEST_CASE("perfect separation passes through (0,1) and scores 1.0 at any cap") {
    std::vector<double> scores{0.9, 0.8, 0.7, 0.2, 0.1};
    std::vector<uint8_t> labels{1, 1, 1, 0, 0};
    auto pts = roc(scores, labels);
    bool through_top_left = false;
    for (auto [f, t] : pts) through_top_left |= (f == 0.0 && t == 1.0);
    CHECK(through_top_left);
    CHECK(partial_auroc(pts, 0.3) == doctest::Approx(1.0));
    CHECK(partial_auroc(pts, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("all-tied scores reduce to the chance diagonal: 0.15 at cap 0.3") {
    std::vector<double> scores(40, 0.5);
    std::vector<uint8_t> labels(40, 0);
    for (int i = 0; i < 13; ++i) labels[i] = 1;
    auto pts = roc(scores, labels);
    REQUIRE(pts.size() == 2);  // ties collapse to one threshold step
    CHECK(partial_auroc(pts, 0.3) == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(partial_auroc(pts, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("random labels give a near-diagonal curve") {
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    const int n = 20000;
    std::vector<double> scores(n);
    std::vector<uint8_t> labels(n);
    for (int i = 0; i < n; ++i) {
        scores[i] = u(rng);
        labels[i] = u(rng) < 0.5 ? 1 : 0;
    }
    double auc = partial_auroc(roc(scores, labels), 1.0);
    CHECK(auc > 0.48);
    CHECK(auc < 0.52);
}

TEST_CASE("cap 1.0 equals the brute-force pairwise-rank AUROC") {
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> usize(5, 200);
    for (int rep = 0; rep < 200; ++rep) {
        int n = usize(rng);
        std::vector<double> scores(n);
        std::vector<uint8_t> labels(n);
        bool both = false;
        for (int i = 0; i < n; ++i) {
            // quantize so ties happen often
            scores[i] = std::floor(u(rng) * 20) / 20.0;
            labels[i] = u(rng) < 0.4 ? 1 : 0;
        }
        size_t pos = 0;
        for (auto l : labels) pos += l;
        both = pos > 0 && pos < labels.size();
        if (!both) continue;
        double fast = partial_auroc(roc(scores, labels), 1.0);
        CHECK(std::abs(fast - rank_auc(scores, labels)) < 1e-9);
    }
}

TEST_CASE("partial auroc is invariant under strictly monotone score transforms") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> scores(300), warped(300);
    std::vector<uint8_t> labels(300);
    for (int i = 0; i < 300; ++i) {
        scores[i] = u(rng);
        warped[i] = std::exp(3.0 * scores[i]) - 1.0;
        labels[i] = u(rng) < 0.3 ? 1 : 0;
    }
    for (double cap : {0.1, 0.3, 1.0}) {
        double a = partial_auroc(roc(scores, labels), cap);
        double b = partial_auroc(roc(warped, labels), cap);
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
}

TEST_CASE("single-class input raises") {
    std::vector<double> scores{0.1, 0.2};
    std::vector<uint8_t> ones{1, 1}, zeros{0, 0};
    CHECK_THROWS_AS(roc(scores, ones), DataError);
    CHECK_THROWS_AS(roc(scores, zeros), DataError);
}

TEST_CASE("pixel eval: maps equal to masks give 1.0") {
    std::vector<Mat<float>> maps;
    std::vector<BinaryMask> masks;
    std::mt19937 rng(4);
    for (int i = 0; i < 3; ++i) {
        BinaryMask m(8, 8);
        Mat<float> f(8, 8);
        std::uniform_int_distribution<int> u(0, 7);
        for (int k = 0; k < 10; ++k) {
            int y = u(rng), x = u(rng);
            m.at(y, x) = 1;
            f(y, x) = 1.0f;
        }
        maps.push_back(f);
        masks.push_back(m);
    }
    PixelEvalResult r = pixel_level_eval(maps, masks, 0.3);
    CHECK(r.pooled.partial_auc_normalized == doctest::Approx(1.0));
    CHECK(r.per_image_mean == doctest::Approx(1.0));
    CHECK(r.per_image_count == 3);
}

TEST_CASE("pixel eval: constant maps degrade to the diagonal (0.15 at cap 0.3)") {
    std::vector<Mat<float>> maps;
    std::vector<BinaryMask> masks;
    for (int i = 0; i < 2; ++i) {
        Mat<float> f(6, 6);
        f.fill(0.42f);
        BinaryMask m(6, 6);
        m.at(1, 1) = 1;
        m.at(2, 3) = 1;
        maps.push_back(f);
        masks.push_back(m);
    }
    PixelEvalResult r = pixel_level_eval(maps, masks, 0.3);
    CHECK(r.pooled.partial_auc_normalized == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("pixel eval pooled result matches the rank oracle on small inputs") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<float> u(0, 1);
    std::vector<Mat<float>> maps;
    std::vector<BinaryMask> masks;
    std::vector<double> all_scores;
    std::vector<uint8_t> all_labels;
    for (int i = 0; i < 4; ++i) {
        Mat<float> f(5, 5);
        BinaryMask m(5, 5);
        for (int k = 0; k < 25; ++k) {
            f.a[k] = std::floor(u(rng) * 8) / 8.0f;
            m.v[k] = u(rng) < 0.3f ? 1 : 0;
            all_scores.push_back(f.a[k]);
            all_labels.push_back(m.v[k]);
        }
        maps.push_back(f);
        masks.push_back(m);
    }
    PixelEvalResult r = pixel_level_eval(maps, masks, 1.0);
    CHECK(r.pooled.partial_auc_normalized ==
          doctest::Approx(rank_auc(all_scores, all_labels)).epsilon(1e-9));
    CHECK(r.n_pixels == 100);
}

TEST_CASE("report renders text and csv") {
    EvalReport rep;
    rep.class_name = "checker";
    rep.n_images = 20;
    rep.fpr_cap = 0.3;
    rep.pooled_partial_auroc = 0.91;
    rep.per_image_mean_partial = 0.88;
    rep.image_level_auroc = -1;
    rep.sigma = 4;
    rep.combo = "squares_rows";
    rep.seed = 7;
    CHECK(rep.to_text().find("checker") != std::string::npos);
    CHECK(rep.to_text().find("n/a") != std::string::npos);
    std::string csv = rep.to_csv();
    CHECK(csv.find("class,") == 0);
    CHECK(csv.find("squares_rows") != std::string::npos);
}

}  // TEST_SUITE
