#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "quadtrack/tensor.hpp"

namespace quadtrack {

enum class LayerKind : std::uint32_t { conv = 0, relu = 1, maxpool = 2 };

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t out_channels = 0;  // conv only
    std::size_t size = 0;          // conv kernel or pool window
    std::size_t stride = 1;

    static LayerSpec conv(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1) {
        return {LayerKind::conv, out_channels, kernel, stride};
    }
    static LayerSpec relu() { return {LayerKind::relu, 0, 0, 1}; }
    static LayerSpec maxpool(std::size_t window, std::size_t stride) {
        return {LayerKind::maxpool, 0, window, stride};
    }
    bool operator==(const LayerSpec&) const = default;
};

inline constexpr std::size_t kExemplarSize = 127;
inline constexpr std::size_t kSearchSize = 255;
inline constexpr std::size_t kImageChannels = 3;
/// Keeps initial scores O(1) instead of O(100).
inline constexpr double kFinalLayerGain = 0.1;

/// Five conv layers, AlexNet-like, total stride 8: 127 -> 6x6, 255 -> 22x22.
std::vector<LayerSpec> reference_architecture();
/// Same geometry with channels 16/32/32/32/16, sized for CPU training.
std::vector<LayerSpec> desk_architecture();

/// Spatial output extent of a layer chain, or throws ShapeError naming the
/// offending layer index.
std::size_t chain_extent(const std::vector<LayerSpec>& layers, std::size_t input_extent);
std::size_t chain_stride(const std::vector<LayerSpec>& layers);

template <typename T>
struct ConvParams {
    BasicTensor<T> kernels;  // O x C x k x k
    std::vector<T> bias;     // O
    bool operator==(const ConvParams&) const = default;
};

/// Everything that is trained by SGD for the embedding: conv kernels and
/// biases in layer order, plus the additive score bias of the head.
/// Gradients use the same container.
template <typename T>
struct ParamSet {
    std::vector<ConvParams<T>> convs;
    T score_bias = T(0);

    std::size_t count() const;
    ParamSet zeros_like() const;
    ParamSet& operator+=(const ParamSet& other);
    ParamSet& operator*=(T factor);
    /// Flattened copy in layer order (kernels, bias per layer, score bias last).
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
    /// Mutable reference to flat entry i, same order as flatten().
    T& entry(std::size_t i);
    bool all_finite() const;
    bool operator==(const ParamSet&) const = default;
};

template <typename T>
class BasicEmbedNet {
public:
    BasicEmbedNet() = default;
    BasicEmbedNet(std::vector<LayerSpec> layers, std::size_t input_channels, ParamSet<T> params);

    /// He-normal kernels (std = sqrt(2 / fan_in), times kFinalLayerGain for the
    /// last conv), zero score bias. First-layer biases center [0, 1] inputs
    /// on 1/2; the other biases are zero.
    static BasicEmbedNet init(std::vector<LayerSpec> layers, std::uint64_t seed,
                              std::size_t input_channels = kImageChannels);

    const std::vector<LayerSpec>& layers() const { return layers_; }
    std::size_t input_channels() const { return input_channels_; }
    std::size_t output_channels() const;
    std::size_t total_stride() const { return chain_stride(layers_); }
    /// Smallest square input with a non-empty output.
    std::size_t min_input() const;

    const ParamSet<T>& params() const { return params_; }
    /// Mutable access; invalidates every forward cache taken before.
    ParamSet<T>& mutable_params() {
        ++revision_;
        return params_;
    }
    T score_bias() const { return params_.score_bias; }

    std::uint64_t id() const { return id_; }
    std::uint64_t revision() const { return revision_; }

    template <typename U>
    BasicEmbedNet<U> cast() const;

    bool same_parameters(const BasicEmbedNet& other) const {
        return layers_ == other.layers_ && input_channels_ == other.input_channels_ && params_ == other.params_;
    }

private:
    std::vector<LayerSpec> layers_;
    std::size_t input_channels_ = kImageChannels;
    ParamSet<T> params_;
    std::uint64_t id_ = 0;
    std::uint64_t revision_ = 0;
};

using EmbedNet = BasicEmbedNet<float>;
using EmbedNet64 = BasicEmbedNet<double>;

/// Intermediate values kept by forward() for the backward pass.
template <typename T>
struct ForwardCache {
    std::uint64_t net_id = 0;
    std::uint64_t revision = 0;
    std::vector<BasicTensor<T>> inputs;               // input of every layer (empty for pools)
    std::vector<Shape> input_shapes;
    std::vector<std::vector<std::uint32_t>> argmax;  // per layer, pools only
};

template <typename T>
struct ForwardResult {
    BasicTensor<T> feature;
    ForwardCache<T> cache;
};

/// Runs the layer chain. Images smaller than min_input() are rejected.
template <typename T>
ForwardResult<T> forward(const BasicEmbedNet<T>& net, const BasicTensor<T>& image);

/// Feature only; skips keeping intermediates.
template <typename T>
BasicTensor<T> embed(const BasicEmbedNet<T>& net, const BasicTensor<T>& image);

/// Parameter gradients of sum(upstream * feature). The returned score_bias
/// entry is zero; the head owns that gradient.
template <typename T>
ParamSet<T> backward(const BasicEmbedNet<T>& net, const ForwardCache<T>& cache, const BasicTensor<T>& upstream);

// Model file: "QDNT", u32 version (1), u32 layer count, per layer five u32
// (kind, in_channels, out_channels, kernel-or-window, stride), then per conv
// layer the kernel block and bias block as little-endian f32, and finally the
// f32 score bias.
inline constexpr std::uint32_t kModelVersion = 1;

void save_model(const EmbedNet& net, const std::filesystem::path& path);
EmbedNet load_model(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_model(const EmbedNet& net);
EmbedNet deserialize_model(std::span<const std::uint8_t> bytes);

}  // namespace quadtrack
