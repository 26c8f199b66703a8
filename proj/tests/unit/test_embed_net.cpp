#include <gtest/gtest.h>

#include <filesystem>

#include "quadtrack/embed_net.hpp"
#include "quadtrack/error.hpp"
#include "quadtrack/random.hpp"
#include "quadtrack/tensor_ops.hpp"

using namespace quadtrack;

namespace {

template <typename T>
BasicTensor<T> random_image(std::size_t c, std::size_t side, std::uint64_t seed) {
    Rng rng(seed);
    BasicTensor<T> t(1, c, side, side);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(uniform(rng, 0.0, 1.0));
    return t;
}

// conv(2, 3) -> relu -> conv(2, 2); small enough for full finite differences.
std::vector<LayerSpec> toy_layers() {
    return {LayerSpec::conv(2, 3, 1), LayerSpec::relu(), LayerSpec::conv(2, 2, 1)};
}

double dot(const Tensor64& a, const Tensor64& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST(Architecture, ReferenceShapes) {
    const auto layers = reference_architecture();
    EXPECT_EQ(chain_extent(layers, 127), 6u);
    EXPECT_EQ(chain_extent(layers, 255), 22u);
    EXPECT_EQ(chain_stride(layers), 8u);
}

TEST(Architecture, DeskShapes) {
    const auto layers = desk_architecture();
    EXPECT_EQ(chain_extent(layers, 127), 6u);
    EXPECT_EQ(chain_extent(layers, 255), 22u);
    EXPECT_EQ(chain_stride(layers), 8u);
}

TEST(Architecture, ChainErrorNamesLayer) {
    try {
        chain_extent(desk_architecture(), 20);
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("layer "), std::string::npos);
    }
}

TEST(EmbedNet, InitIsSeeded) {
    const auto a = EmbedNet::init(desk_architecture(), 5);
    const auto b = EmbedNet::init(desk_architecture(), 5);
    const auto c = EmbedNet::init(desk_architecture(), 6);
    EXPECT_TRUE(a.same_parameters(b));
    EXPECT_FALSE(a.same_parameters(c));
    EXPECT_EQ(a.score_bias(), 0.0f);
}

TEST(EmbedNet, InitKernelScale) {
    const auto net = EmbedNet64::init(reference_architecture(), 3);
    const auto& conv = net.params().convs[1];  // 96 * 5 * 5 fan-in
    double ss = 0.0;
    for (double v : conv.kernels.span()) ss += v * v;
    const double std_est = std::sqrt(ss / static_cast<double>(conv.kernels.size()));
    EXPECT_NEAR(std_est, std::sqrt(2.0 / (96.0 * 25.0)), 0.02 * std::sqrt(2.0 / (96.0 * 25.0)));
    for (double b : conv.bias) EXPECT_EQ(b, 0.0);
}

TEST(EmbedNet, ReferenceOutputExtents) {
    const auto net = EmbedNet::init(reference_architecture(), 1);
    const Tensor z = embed(net, random_image<float>(3, 127, 1));
    const Tensor x = embed(net, random_image<float>(3, 255, 2));
    EXPECT_EQ(z.shape(), (Shape{1, 128, 6, 6}));
    EXPECT_EQ(x.shape(), (Shape{1, 128, 22, 22}));
}

TEST(EmbedNet, ForwardIsBitExactOnRepeat) {
    const auto net = EmbedNet::init(desk_architecture(), 1);
    const Tensor img = random_image<float>(3, 255, 4);
    EXPECT_EQ(embed(net, img), embed(net, img));
    EXPECT_EQ(forward(net, img).feature, embed(net, img));
}

TEST(EmbedNet, RejectsWrongChannelsAndSmallImages) {
    const auto net = EmbedNet::init(desk_architecture(), 1);
    EXPECT_THROW(embed(net, random_image<float>(1, 127, 1)), ShapeError);
    EXPECT_THROW(embed(net, random_image<float>(3, net.min_input() - 1, 1)), ShapeError);
    EXPECT_NO_THROW(embed(net, random_image<float>(3, net.min_input(), 1)));
}

TEST(EmbedNet, TranslationCovariance) {
    const auto net = EmbedNet64::init(desk_architecture(), 2);
    const std::size_t stride = net.total_stride();
    const Tensor64 big = random_image<double>(3, 255 + stride, 9);
    Tensor64 a(1, 3, 255, 255);
    Tensor64 b(1, 3, 255, 255);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 255; ++y)
            for (std::size_t x = 0; x < 255; ++x) {
                a.at(0, c, y, x) = big.at(0, c, y, x);
                b.at(0, c, y, x) = big.at(0, c, y, x + stride);
            }
    const Tensor64 fa = embed(net, a);
    const Tensor64 fb = embed(net, b);
    const Shape s = fa.shape();
    for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t y = 0; y < s.h; ++y)
            for (std::size_t x = 0; x + 1 < s.w; ++x) EXPECT_NEAR(fb.at(0, c, y, x), fa.at(0, c, y, x + 1), 1e-4);
}

TEST(Backward, ZeroUpstreamGivesZeroGradient) {
    const auto net = EmbedNet64::init(toy_layers(), 1, 1);
    const Tensor64 img = random_image<double>(1, 6, 2);
    const auto fwd = forward(net, img);
    const auto g = backward(net, fwd.cache, Tensor64(fwd.feature.shape()));
    for (double v : g.flatten()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, ToyNetMatchesFiniteDifferences) {
    auto net = EmbedNet64::init(toy_layers(), 4, 1);
    // Push biases off zero so no unit sits on the ReLU kink.
    for (auto& c : net.mutable_params().convs)
        for (auto& b : c.bias) b = 0.05;
    const Tensor64 img = random_image<double>(1, 6, 3);
    const auto fwd = forward(net, img);
    Tensor64 up(fwd.feature.shape());
    Rng rng(8);
    for (std::size_t i = 0; i < up.size(); ++i) up[i] = uniform(rng, -1.0, 1.0);
    const auto g = backward(net, fwd.cache, up).flatten();

    const auto theta = net.params().flatten();
    auto f = [&](std::span<const double> p) {
        auto copy = net;
        copy.mutable_params().assign(p);
        return dot(embed(copy, img), up);
    };
    const auto fd = finite_diff_grad(f, theta, 1e-6);
    ASSERT_EQ(fd.size(), g.size());
    // The last flat entry is the score bias, which the head owns.
    for (std::size_t i = 0; i + 1 < fd.size(); ++i) EXPECT_LT(relative_error(g[i], fd[i], 1e-6), 1e-6) << i;
}

TEST(Backward, BatchGradientIsSumOfSamples) {
    const auto net = EmbedNet64::init(toy_layers(), 4, 1);
    const Tensor64 a = random_image<double>(1, 6, 10);
    const Tensor64 b = random_image<double>(1, 6, 11);
    Tensor64 ab(1 + 1, 1, 6, 6);
    std::copy(a.span().begin(), a.span().end(), ab.data());
    std::copy(b.span().begin(), b.span().end(), ab.data() + a.size());
    auto grad_of = [&](const Tensor64& img) {
        const auto fwd = forward(net, img);
        return backward(net, fwd.cache, Tensor64(fwd.feature.shape(), 1.0));
    };
    auto sum = grad_of(a);
    sum += grad_of(b);
    const auto joint = grad_of(ab).flatten();
    const auto expected = sum.flatten();
    for (std::size_t i = 0; i < joint.size(); ++i) EXPECT_NEAR(joint[i], expected[i], 1e-12);
}

TEST(Backward, StaleCacheRejected) {
    auto net = EmbedNet::init(toy_layers(), 1, 1);
    const auto fwd = forward(net, random_image<float>(1, 6, 1));
    net.mutable_params().score_bias = 1.0f;
    EXPECT_THROW(backward(net, fwd.cache, Tensor(fwd.feature.shape())), ShapeError);
}

TEST(ModelFile, RoundTrip) {
    auto net = EmbedNet::init(desk_architecture(), 12);
    net.mutable_params().score_bias = -0.25f;
    const auto bytes = serialize_model(net);
    const EmbedNet back = deserialize_model(bytes);
    EXPECT_TRUE(back.same_parameters(net));

    const auto path = std::filesystem::temp_directory_path() / "quadtrack_roundtrip.qdnt";
    save_model(net, path);
    EXPECT_TRUE(load_model(path).same_parameters(net));
    std::filesystem::remove(path);
}

TEST(ModelFile, CorruptedMagic) {
    auto bytes = serialize_model(EmbedNet::init(toy_layers(), 1, 1));
    bytes[0] = 'X';
    try {
        deserialize_model(bytes);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
    }
}

TEST(ModelFile, UnsupportedVersion) {
    auto bytes = serialize_model(EmbedNet::init(toy_layers(), 1, 1));
    bytes[4] = 99;
    bytes[5] = bytes[6] = bytes[7] = 0;
    try {
        deserialize_model(bytes);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("unsupported version"), std::string::npos);
    }
}

TEST(ModelFile, TruncatedAndTrailing) {
    auto bytes = serialize_model(EmbedNet::init(toy_layers(), 1, 1));
    auto shorter = bytes;
    shorter.resize(bytes.size() - 3);
    EXPECT_THROW(deserialize_model(shorter), DataError);
    auto longer = bytes;
    longer.push_back(0);
    EXPECT_THROW(deserialize_model(longer), DataError);
    EXPECT_THROW(load_model("/nonexistent/model.qdnt"), DataError);
}

TEST(ParamSet, FlattenAssignRoundTrip) {
    auto net = EmbedNet64::init(toy_layers(), 3, 1);
    auto flat = net.params().flatten();
    EXPECT_EQ(flat.size(), net.params().count());
    for (auto& v : flat) v += 1.0;
    auto p = net.params();
    p.assign(flat);
    EXPECT_EQ(p.flatten(), flat);
    EXPECT_EQ(p.entry(flat.size() - 1), p.score_bias);
}
