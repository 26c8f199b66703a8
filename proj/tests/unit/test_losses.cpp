#include <gtest/gtest.h>

#include <cmath>

#include "quadtrack/error.hpp"
#include "quadtrack/losses.hpp"
#include "quadtrack/mining.hpp"
#include "quadtrack/random.hpp"
#include "quadtrack/tensor_ops.hpp"

using namespace quadtrack;

namespace {

// Frozen from a direct evaluation of the softmax-distance formulas in long double.
constexpr double kSPlus10 = 0.7310585786300049;
constexpr double kL2At10 = 0.1446589762570265;
constexpr double kGradAt10 = 0.21150837113706686;

struct MapCase {
    Grid64 scores;
    LabelMap labels;
    WeightMap weights;
};

MapCase random_case(Rng& rng, std::size_t n) {
    MapCase c{Grid64(n, n), build_label_map(n, 1.0), WeightMap{}};
    for (std::size_t i = 0; i < c.scores.size(); ++i) c.scores[i] = uniform(rng, -3.0, 3.0);
    c.weights = init_balance_weights(c.labels);
    return c;
}

}  // namespace

TEST(PairLoss, SingleCellAtZero) {
    const auto r = pair_loss(Grid64(1, 1, 0.0), LabelMap(1, 1, 1), WeightMap(1, 1, 1.0));
    EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
    EXPECT_EQ(r.grad[0], -0.5);
}

TEST(PairLoss, SaturatedCorrectClassification) {
    const auto r = pair_loss(Grid64(1, 1, 100.0), LabelMap(1, 1, 1), WeightMap(1, 1, 1.0));
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_LT(r.loss, 1e-40);
    EXPECT_LT(std::abs(r.grad[0]), 1e-40);
}

TEST(PairLoss, LargeMagnitudesStayFinite) {
    for (double v : {1000.0, -1000.0}) {
        for (std::int8_t y : {std::int8_t{1}, std::int8_t{-1}}) {
            const auto r = pair_loss(Grid64(1, 1, v), LabelMap(1, 1, y), WeightMap(1, 1, 1.0));
            EXPECT_TRUE(std::isfinite(r.loss));
            EXPECT_TRUE(std::isfinite(r.grad[0]));
            if (y * v < 0) {
                EXPECT_NEAR(r.loss, 1000.0, 1e-9);
                EXPECT_NEAR(std::abs(r.grad[0]), 1.0, 1e-12);
            }
        }
    }
}

TEST(PairLoss, UniformWeightsEqualMeanLogistic) {
    Rng rng(3);
    Grid64 v(3, 3);
    LabelMap y(3, 3, -1);
    y(1, 1) = 1;
    y(0, 2) = 1;
    for (std::size_t i = 0; i < 9; ++i) v[i] = uniform(rng, -2.0, 2.0);
    double direct = 0.0;
    for (std::size_t i = 0; i < 9; ++i) direct += std::log(1.0 + std::exp(-y[i] * v[i]));
    const auto r = pair_loss(v, y, uniform_weights(y));
    EXPECT_NEAR(r.loss, direct / 9.0, 1e-14);
}

TEST(PairLoss, GradientMatchesFiniteDifferences) {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const MapCase c = random_case(rng, 7);
        const auto r = pair_loss(c.scores, c.labels, c.weights);
        const auto fd = finite_diff_grad(
            [&](std::span<const double> p) {
                return pair_loss(Grid64(7, 7, std::vector<double>(p.begin(), p.end())), c.labels, c.weights).loss;
            },
            c.scores.span(), 1e-5);
        for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_LT(relative_error(r.grad[i], fd[i], 1e-10), 1e-6);
    }
}

TEST(PairLoss, RejectsUnnormalizedWeights) {
    EXPECT_THROW(pair_loss(Grid64(1, 2), LabelMap(1, 2, 1), WeightMap(1, 2, 0.6)), ShapeError);
    EXPECT_THROW(pair_loss(Grid64(1, 2), LabelMap(1, 3, 1), WeightMap(1, 2, 0.5)), ShapeError);
}

TEST(TripletLoss, EqualScoresAreSymmetric) {
    for (double f : {-7.0, 0.0, 0.25, 1e3}) {
        const auto r = triplet_loss(f, f);
        EXPECT_EQ(r.s_plus, 0.5);
        EXPECT_EQ(r.s_minus, 0.5);
        EXPECT_EQ(r.loss, 0.5);
        EXPECT_EQ(r.d_plus, -0.5);
        EXPECT_EQ(r.d_minus, 0.5);
    }
}

TEST(TripletLoss, OneVersusZeroOracleValues) {
    const auto r = triplet_loss(1.0, 0.0);
    EXPECT_NEAR(r.s_plus, kSPlus10, 1e-15);
    EXPECT_NEAR(r.loss, kL2At10, 1e-15);
    EXPECT_NEAR(r.d_plus, -kGradAt10, 1e-15);
    EXPECT_NEAR(r.d_minus, kGradAt10, 1e-15);
}

TEST(TripletLoss, LargeGapIsStable) {
    const auto r = triplet_loss(1000.0, 0.0);
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_EQ(r.s_plus, 1.0);
    EXPECT_EQ(r.loss, 0.0);
    EXPECT_TRUE(std::isfinite(r.d_plus));
    const auto w = triplet_loss(0.0, 1000.0);
    EXPECT_TRUE(std::isfinite(w.loss));
    EXPECT_NEAR(w.loss, 2.0, 1e-12);
}

TEST(TripletLoss, RejectsNonFinite) {
    EXPECT_THROW(triplet_loss(NAN, 0.0), NumericalError);
    EXPECT_THROW(triplet_loss(0.0, INFINITY), NumericalError);
}

TEST(TripletLoss, Invariants) {
    Rng rng(5);
    for (int i = 0; i < 20000; ++i) {
        const double fp = uniform(rng, -20.0, 20.0);
        const double fm = uniform(rng, -20.0, 20.0);
        const auto r = triplet_loss(fp, fm);
        ASSERT_EQ(r.s_plus + r.s_minus, 1.0);
        // The smaller probability is the exact complement of the larger one, so it can round to zero.
        ASSERT_GE(r.s_plus, 0.0);
        ASSERT_GE(r.s_minus, 0.0);
        ASSERT_NEAR(r.loss, 2.0 * r.s_minus * r.s_minus, 1e-12);
        ASSERT_EQ(r.d_plus, -r.d_minus);
        const double c = uniform(rng, -50.0, 50.0);
        const auto s = triplet_loss(fp + c, fm + c);
        ASSERT_NEAR(s.loss, r.loss, 1e-12);
        ASSERT_NEAR(s.d_plus, r.d_plus, 1e-12);
    }
}

TEST(TripletLoss, DecreasesWithMargin) {
    double prev = triplet_loss(-10.0, 0.0).loss;
    for (double d = -9.9; d <= 10.0; d += 0.1) {
        const double cur = triplet_loss(d, 0.0).loss;
        EXPECT_LT(cur, prev) << d;
        prev = cur;
    }
}

TEST(TripletLoss, GradientMatchesFiniteDifferences) {
    Rng rng(6);
    for (int i = 0; i < 200; ++i) {
        const double fp = uniform(rng, -4.0, 4.0);
        const double fm = uniform(rng, -4.0, 4.0);
        const auto r = triplet_loss(fp, fm);
        const double gp = central_difference([&](double d) { return triplet_loss(fp + d, fm).loss; }, 1e-5);
        const double gm = central_difference([&](double d) { return triplet_loss(fp, fm + d).loss; }, 1e-5);
        EXPECT_LT(relative_error(r.d_plus, gp, 1e-10), 1e-8);
        EXPECT_LT(relative_error(r.d_minus, gm, 1e-10), 1e-8);
    }
}

TEST(CombineLoss, EqualLossesMakeWeightsIndifferent) {
    const auto r = combine_loss(1.25, 1.25, LossWeights{0.9, 0.1});
    EXPECT_NEAR(r.loss, 1.25, 1e-15);
    EXPECT_NEAR(r.d_pair_weight, 0.0, 1e-15);
    EXPECT_NEAR(r.d_triplet_weight, 0.0, 1e-15);
}

TEST(CombineLoss, TwoAndZero) {
    const auto r = combine_loss(2.0, 0.0, LossWeights{0.9, 0.1});
    EXPECT_NEAR(r.loss, 1.8, 1e-12);
    EXPECT_NEAR(r.d_pair_loss, 0.9, 1e-12);
    EXPECT_NEAR(r.d_triplet_loss, 0.1, 1e-12);
    EXPECT_NEAR(r.d_pair_weight, 0.2, 1e-12);
    EXPECT_NEAR(r.d_triplet_weight, -1.8, 1e-12);
}

TEST(CombineLoss, LossGradientsSumToOne) {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        const LossWeights w{uniform(rng, 0.01, 5.0), uniform(rng, 0.01, 5.0)};
        const auto r = combine_loss(uniform(rng, 0.0, 3.0), uniform(rng, 0.0, 3.0), w);
        ASSERT_EQ(r.d_pair_loss + r.d_triplet_loss, 1.0);
    }
}

TEST(CombineLoss, RescalingInvariance) {
    Rng rng(8);
    for (int i = 0; i < 10000; ++i) {
        const LossWeights w{uniform(rng, 0.01, 2.0), uniform(rng, 0.01, 2.0)};
        const double a = uniform(rng, 1.0, 10.0);
        const double l1 = uniform(rng, 0.0, 3.0);
        const double l2 = uniform(rng, 0.0, 3.0);
        ASSERT_NEAR(combine_loss(l1, l2, w).loss, combine_loss(l1, l2, LossWeights{a * w.pair, a * w.triplet}).loss,
                    1e-12);
    }
}

TEST(CombineLoss, FiniteDifferencesInAllArguments) {
    Rng rng(9);
    for (int i = 0; i < 100; ++i) {
        const std::vector<double> p{uniform(rng, 0.0, 3.0), uniform(rng, 0.0, 3.0), uniform(rng, 0.1, 2.0),
                                    uniform(rng, 0.1, 2.0)};
        const auto r = combine_loss(p[0], p[1], LossWeights{p[2], p[3]});
        const auto fd = finite_diff_grad(
            [](std::span<const double> q) { return combine_loss(q[0], q[1], LossWeights{q[2], q[3]}).loss; }, p,
            1e-5);
        EXPECT_LT(relative_error(r.d_pair_loss, fd[0], 1e-8), 1e-8);
        EXPECT_LT(relative_error(r.d_triplet_loss, fd[1], 1e-8), 1e-8);
        EXPECT_LT(relative_error(r.d_pair_weight, fd[2], 1e-8), 1e-8);
        EXPECT_LT(relative_error(r.d_triplet_weight, fd[3], 1e-8), 1e-8);
    }
}

TEST(CombineLoss, RejectsWeightsBelowThreshold) {
    EXPECT_THROW(combine_loss(1.0, 1.0, LossWeights{0.005, 0.2}), ShapeError);
    EXPECT_NO_THROW(combine_loss(1.0, 1.0, clamp_weights(LossWeights{0.005, 0.2})));
}

TEST(ClampWeights, Examples) {
    EXPECT_EQ(clamp_weights({0.005, 0.2}), (LossWeights{0.01, 0.2}));
    EXPECT_EQ(clamp_weights({0.9, 0.1}), (LossWeights{0.9, 0.1}));
    EXPECT_EQ(clamp_weights({-1.0, -1.0}), (LossWeights{0.01, 0.01}));
}
