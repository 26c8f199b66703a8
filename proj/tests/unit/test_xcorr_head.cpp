#include <gtest/gtest.h>

#include "quadtrack/random.hpp"
#include "quadtrack/tensor_ops.hpp"
#include "quadtrack/xcorr_head.hpp"

using namespace quadtrack;

namespace {

Tensor64 random_tensor(Shape s, Rng& rng) {
    Tensor64 t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform(rng, -1.0, 1.0);
    return t;
}

}  // namespace

TEST(ScoreMap, ZeroFeaturesGiveBias) {
    const auto m = score_map(0.5f, Tensor(1, 8, 6, 6), Tensor(1, 8, 22, 22));
    ASSERT_EQ(m.rows(), 17u);
    ASSERT_EQ(m.cols(), 17u);
    for (float v : m.values.span()) EXPECT_EQ(v, 0.5f);
}

TEST(ScoreMap, MatchesBruteForcePlusBias) {
    Rng rng(1);
    const Tensor64 z = random_tensor({1, 2, 2, 2}, rng);
    const Tensor64 x = random_tensor({1, 2, 5, 5}, rng);
    const auto m = score_map(-0.3, z, x);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double s = -0.3;
            for (std::size_t c = 0; c < 2; ++c)
                for (std::size_t u = 0; u < 2; ++u)
                    for (std::size_t v = 0; v < 2; ++v) s += z.at(0, c, u, v) * x.at(0, c, i + u, j + v);
            EXPECT_NEAR(m(i, j), s, 1e-12);
        }
}

TEST(ScoreMapGrad, AllOnesUpstreamBiasCount) {
    Rng rng(2);
    const Tensor64 z = random_tensor({1, 2, 6, 6}, rng);
    const Tensor64 x = random_tensor({1, 2, 22, 22}, rng);
    const auto g = score_map_grad(Grid64(17, 17, 1.0), z, x);
    EXPECT_EQ(g.bias, 289.0);
}

TEST(ScoreMapGrad, ZeroUpstream) {
    Rng rng(3);
    const Tensor64 z = random_tensor({1, 2, 3, 3}, rng);
    const Tensor64 x = random_tensor({1, 2, 5, 5}, rng);
    const auto g = score_map_grad(Grid64(3, 3), z, x);
    EXPECT_EQ(g.bias, 0.0);
    for (double v : g.exemplar.span()) EXPECT_EQ(v, 0.0);
    for (double v : g.search.span()) EXPECT_EQ(v, 0.0);
}

TEST(ScoreMapGrad, OneChannelFiniteDifferences) {
    Rng rng(4);
    const Tensor64 z = random_tensor({1, 1, 3, 3}, rng);
    const Tensor64 x = random_tensor({1, 1, 5, 5}, rng);
    Grid64 up(3, 3);
    for (std::size_t i = 0; i < 9; ++i) up[i] = uniform(rng, -1.0, 1.0);
    const auto g = score_map_grad(up, z, x);
    auto total = [&](const Tensor64& zz, const Tensor64& xx, double b) {
        const auto m = score_map(b, zz, xx);
        double s = 0.0;
        for (std::size_t i = 0; i < 9; ++i) s += m.values[i] * up[i];
        return s;
    };
    const auto fz = finite_diff_grad(
        [&](std::span<const double> p) {
            return total(Tensor64(z.shape(), std::vector<double>(p.begin(), p.end())), x, 0.0);
        },
        z.span(), 1e-5);
    const auto fx = finite_diff_grad(
        [&](std::span<const double> p) {
            return total(z, Tensor64(x.shape(), std::vector<double>(p.begin(), p.end())), 0.0);
        },
        x.span(), 1e-5);
    const double fb = central_difference([&](double d) { return total(z, x, d); }, 1e-5);
    for (std::size_t i = 0; i < fz.size(); ++i) EXPECT_LT(relative_error(g.exemplar[i], fz[i], 1e-6), 1e-6);
    for (std::size_t i = 0; i < fx.size(); ++i) EXPECT_LT(relative_error(g.search[i], fx[i], 1e-6), 1e-6);
    EXPECT_LT(relative_error(g.bias, fb, 1e-6), 1e-6);
}
