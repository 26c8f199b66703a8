#include <gtest/gtest.h>

#include <cmath>

#include "quadtrack/error.hpp"
#include "quadtrack/mining.hpp"
#include "quadtrack/random.hpp"

using namespace quadtrack;

namespace {

Grid64 random_scores(Rng& rng, std::size_t n, bool coarse) {
    Grid64 g(n, n);
    // Coarse values produce frequent ties.
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = coarse ? static_cast<double>(uniform_index(rng, 5)) : uniform(rng, -5.0, 5.0);
    return g;
}

// Independent scan: collects candidates first, then takes the first extreme.
HardPair scan_oracle(const Grid64& v, const LabelMap& y, MiningMode mode) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (y[i] > 0) lo = std::min(lo, v[i]);
        else hi = std::max(hi, v[i]);
    }
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = v.size(); i-- > 0;) {
        if (y[i] > 0 && v[i] == lo) pos = i;
        if (y[i] < 0 && v[i] == hi) neg = i;
    }
    HardPair p{{pos / v.cols(), pos % v.cols()}, {neg / v.cols(), neg % v.cols()}};
    if (mode == MiningMode::tracking) p.positive = {v.rows() / 2, v.cols() / 2};
    return p;
}

// Recompute-from-scratch: explicit violator set, new weights as exact ratios.
WeightMap adapt_oracle(const Grid64& v, const LabelMap& y, const WeightMap& w) {
    double lo = INFINITY;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (y[i] > 0) lo = std::min(lo, v[i]);
    std::vector<bool> violator(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) violator[i] = y[i] < 0 && v[i] > lo;
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) total += violator[i] ? 2.0 * w[i] : w[i];
    WeightMap out(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (violator[i] ? 2.0 * w[i] : w[i]) / total;
    return out;
}

}  // namespace

TEST(LabelMap, SeventeenRadiusTwo) {
    const auto y = build_label_map(17, 2.0);
    EXPECT_EQ(count_label(y, 1), 13u);
    EXPECT_EQ(count_label(y, -1), 276u);
    EXPECT_EQ(y(8, 8), 1);
    EXPECT_EQ(y(6, 8), 1);
    EXPECT_EQ(y(7, 7), 1);
    EXPECT_EQ(y(6, 7), -1);
}

TEST(LabelMap, SmallRadii) {
    EXPECT_EQ(count_label(build_label_map(17, 0.999), 1), 1u);
    const auto cross = build_label_map(5, 1.0);
    EXPECT_EQ(count_label(cross, 1), 5u);
    EXPECT_EQ(cross(1, 2), 1);
    EXPECT_EQ(cross(1, 1), -1);
}

TEST(LabelMap, HasDihedralSymmetry) {
    for (double r : {1.0, 2.0, 2.5, 3.2}) {
        const auto y = build_label_map(17, r);
        for (std::size_t i = 0; i < 17; ++i)
            for (std::size_t j = 0; j < 17; ++j) {
                EXPECT_EQ(y(i, j), y(j, i));
                EXPECT_EQ(y(i, j), y(16 - i, j));
                EXPECT_EQ(y(i, j), y(i, 16 - j));
            }
    }
}

TEST(LabelMap, RejectsEvenSizeAndBadRadius) {
    EXPECT_THROW(build_label_map(16, 2.0), ShapeError);
    EXPECT_THROW(build_label_map(17, 0.0), ShapeError);
    EXPECT_THROW(build_label_map(5, 2.5), ShapeError);
}

TEST(BalanceWeights, SeventeenRadiusTwo) {
    const auto y = build_label_map(17, 2.0);
    const auto w = init_balance_weights(y);
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        EXPECT_EQ(w[i], y[i] > 0 ? 1.0 / 26.0 : 1.0 / 552.0);
        sum += w[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(BalanceWeights, OneOfEach) {
    LabelMap y(1, 2, 1);
    y[1] = -1;
    const auto w = init_balance_weights(y);
    EXPECT_EQ(w[0], 0.5);
    EXPECT_EQ(w[1], 0.5);
    EXPECT_THROW(init_balance_weights(LabelMap(2, 2, 1)), ShapeError);
}

TEST(AdaptWeights, NoViolatorsLeavesWeightsUnchanged) {
    const auto y = build_label_map(5, 1.0);
    Grid64 v(5, 5, -1.0);
    for (std::size_t i = 0; i < 25; ++i)
        if (y[i] > 0) v[i] = 1.0;
    const auto w = init_balance_weights(y);
    const auto a = adapt_weights(v, y, w);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(a[i], w[i], 1e-16);
}

TEST(AdaptWeights, SingleViolator) {
    const auto y = build_label_map(5, 1.0);
    Grid64 v(5, 5, -1.0);
    for (std::size_t i = 0; i < 25; ++i)
        if (y[i] > 0) v[i] = 1.0;
    v(0, 0) = 2.0;
    const auto w = init_balance_weights(y);
    const double q = w(0, 0);
    const auto a = adapt_weights(v, y, w);
    EXPECT_NEAR(a(0, 0), 2.0 * q / (1.0 + q), 1e-15);
    for (std::size_t i = 1; i < 25; ++i) EXPECT_NEAR(a[i], w[i] / (1.0 + q), 1e-15);
    double sum = 0.0;
    for (double x : a.span()) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(AdaptWeights, StrictComparison) {
    const auto y = build_label_map(5, 1.0);
    Grid64 v(5, 5, 0.0);  // negatives equal to the lowest positive do not violate
    const auto w = init_balance_weights(y);
    const auto a = adapt_weights(v, y, w);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(a[i], w[i], 1e-16);
}

TEST(AdaptWeights, AllNegativesViolatingPreservesRatios) {
    const auto y = build_label_map(5, 1.0);
    Grid64 v(5, 5, 3.0);
    for (std::size_t i = 0; i < 25; ++i)
        if (y[i] > 0) v[i] = -3.0;
    Rng rng(2);
    WeightMap w(5, 5);
    double total = 0.0;
    for (std::size_t i = 0; i < 25; ++i) total += (w[i] = uniform(rng, 0.1, 1.0));
    for (auto& x : w.span()) x /= total;
    const auto a = adapt_weights(v, y, w);
    for (std::size_t i = 0; i < 25; ++i)
        for (std::size_t j = 0; j < 25; ++j)
            if (y[i] == y[j]) {
                EXPECT_NEAR(a[i] / a[j], w[i] / w[j], 1e-12);
            }
}

TEST(AdaptWeights, RepeatedCallsDoubleAgain) {
    const auto y = build_label_map(5, 1.0);
    Grid64 v(5, 5, -1.0);
    for (std::size_t i = 0; i < 25; ++i)
        if (y[i] > 0) v[i] = 1.0;
    v(4, 4) = 5.0;
    const auto w = init_balance_weights(y);
    const auto once = adapt_weights(v, y, w);
    const auto twice = adapt_weights(v, y, once);
    EXPECT_NEAR(twice(4, 4) / twice(0, 0), 4.0 * w(4, 4) / w(0, 0), 1e-12);
}

TEST(AdaptWeights, MatchesRecomputeOracle) {
    Rng rng(3);
    const auto y = build_label_map(17, 2.0);
    const auto w0 = init_balance_weights(y);
    for (int trial = 0; trial < 1000; ++trial) {
        const Grid64 v = random_scores(rng, 17, trial % 2 == 0);
        const auto a = adapt_weights(v, y, w0);
        const auto o = adapt_oracle(v, y, w0);
        double sum = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            ASSERT_EQ(a[i], o[i]);
            ASSERT_GT(a[i], 0.0);
            sum += a[i];
        }
        ASSERT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(SelectHardPair, IncreasingScores) {
    const auto y = build_label_map(5, 1.0);
    Grid64 v(5, 5);
    for (std::size_t i = 0; i < 25; ++i) v[i] = static_cast<double>(i);
    const auto p = select_hard_pair(v, y, MiningMode::general);
    EXPECT_EQ(p.positive, (Cell{1, 2}));
    EXPECT_EQ(p.negative, (Cell{4, 4}));
}

TEST(SelectHardPair, TrackingAlwaysUsesCenter) {
    Rng rng(4);
    const auto y = build_label_map(17, 2.0);
    for (int i = 0; i < 50; ++i) {
        const auto p = select_hard_pair(random_scores(rng, 17, false), y, MiningMode::tracking);
        EXPECT_EQ(p.positive, (Cell{8, 8}));
    }
}

TEST(SelectHardPair, ConstantScoresTieToFirstCell) {
    const auto y = build_label_map(5, 1.0);
    const auto p = select_hard_pair(Grid64(5, 5, 0.5), y, MiningMode::general);
    EXPECT_EQ(p.positive, (Cell{1, 2}));
    EXPECT_EQ(p.negative, (Cell{0, 0}));
}

TEST(SelectHardPair, MatchesScanOracle) {
    Rng rng(5);
    const auto y = build_label_map(17, 2.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const Grid64 v = random_scores(rng, 17, trial % 2 == 0);
        for (MiningMode mode : {MiningMode::general, MiningMode::tracking}) {
            const auto got = select_hard_pair(v, y, mode);
            const auto want = scan_oracle(v, y, mode);
            ASSERT_EQ(got.positive, want.positive);
            ASSERT_EQ(got.negative, want.negative);
        }
    }
}

TEST(Mine, CombinesSelectionAndAdaptation) {
    Rng rng(6);
    const auto y = build_label_map(17, 2.0);
    const auto w0 = init_balance_weights(y);
    const Grid64 v = random_scores(rng, 17, false);
    const auto m = mine(v, y, w0, MiningMode::tracking, true);
    EXPECT_EQ(m.positive, (Cell{8, 8}));
    EXPECT_EQ(m.weights, adapt_weights(v, y, w0));
    EXPECT_EQ(mine(v, y, w0, MiningMode::tracking, false).weights, w0);
}
