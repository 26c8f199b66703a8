#include "quadtrack/embed_net.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "quadtrack/tensor_ops.hpp"

namespace quadtrack {

std::vector<LayerSpec> reference_architecture() {
    return {LayerSpec::conv(96, 11, 2), LayerSpec::relu(), LayerSpec::maxpool(3, 2),
            LayerSpec::conv(256, 5, 1), LayerSpec::relu(), LayerSpec::maxpool(3, 2),
            LayerSpec::conv(192, 3, 1), LayerSpec::relu(),
            LayerSpec::conv(192, 3, 1), LayerSpec::relu(),
            LayerSpec::conv(128, 3, 1)};
}

std::vector<LayerSpec> desk_architecture() {
    return {LayerSpec::conv(16, 11, 2), LayerSpec::relu(), LayerSpec::maxpool(3, 2),
            LayerSpec::conv(32, 5, 1), LayerSpec::relu(), LayerSpec::maxpool(3, 2),
            LayerSpec::conv(32, 3, 1), LayerSpec::relu(),
            LayerSpec::conv(32, 3, 1), LayerSpec::relu(),
            LayerSpec::conv(16, 3, 1)};
}

std::size_t chain_extent(const std::vector<LayerSpec>& layers, std::size_t input_extent) {
    std::size_t extent = input_extent;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        if (l.kind == LayerKind::relu) continue;
        if (l.size == 0 || l.stride == 0 || l.size > extent) {
            throw ShapeError("layer " + std::to_string(i) + ": window " + std::to_string(l.size) + " stride " +
                             std::to_string(l.stride) + " does not fit extent " + std::to_string(extent));
        }
        extent = (extent - l.size) / l.stride + 1;
    }
    return extent;
}

std::size_t chain_stride(const std::vector<LayerSpec>& layers) {
    std::size_t s = 1;
    for (const auto& l : layers) {
        if (l.kind != LayerKind::relu) s *= l.stride;
    }
    return s;
}

namespace {

std::uint64_t next_net_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

void validate_chain(const std::vector<LayerSpec>& layers, std::size_t input_channels) {
    if (layers.empty()) throw ShapeError("layer chain is empty");
    if (input_channels == 0) throw ShapeError("input channel count must be positive");
    bool has_conv = false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerKind::conv:
                if (l.out_channels == 0 || l.size == 0 || l.stride == 0) {
                    throw ShapeError("layer " + std::to_string(i) + ": conv needs positive channels, kernel, stride");
                }
                has_conv = true;
                break;
            case LayerKind::maxpool:
                if (l.size == 0 || l.stride == 0) {
                    throw ShapeError("layer " + std::to_string(i) + ": maxpool needs positive window and stride");
                }
                break;
            case LayerKind::relu:
                break;
            default:
                throw ShapeError("layer " + std::to_string(i) + ": unknown layer kind");
        }
    }
    if (!has_conv) throw ShapeError("layer chain has no convolution");
    // Exemplar must shrink to a non-empty map and search must come out strictly larger.
    std::size_t z = 0;
    std::size_t x = 0;
    z = chain_extent(layers, kExemplarSize);
    x = chain_extent(layers, kSearchSize);
    if (x <= z) {
        throw ShapeError("layer " + std::to_string(layers.size() - 1) + ": search feature not larger than exemplar");
    }
}

}  // namespace

template <typename T>
std::size_t ParamSet<T>::count() const {
    std::size_t n = 1;
    for (const auto& c : convs) n += c.kernels.size() + c.bias.size();
    return n;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
    ParamSet out;
    out.convs.reserve(convs.size());
    for (const auto& c : convs) {
        out.convs.push_back({BasicTensor<T>(c.kernels.shape()), std::vector<T>(c.bias.size(), T(0))});
    }
    return out;
}

template <typename T>
ParamSet<T>& ParamSet<T>::operator+=(const ParamSet& other) {
    if (other.convs.size() != convs.size()) throw ShapeError("parameter set layer count mismatch");
    for (std::size_t l = 0; l < convs.size(); ++l) {
        auto& a = convs[l];
        const auto& b = other.convs[l];
        if (a.kernels.shape() != b.kernels.shape() || a.bias.size() != b.bias.size()) {
            throw ShapeError("parameter set shape mismatch at conv " + std::to_string(l));
        }
        for (std::size_t i = 0; i < a.kernels.size(); ++i) a.kernels[i] += b.kernels[i];
        for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
    }
    score_bias += other.score_bias;
    return *this;
}

template <typename T>
ParamSet<T>& ParamSet<T>::operator*=(T factor) {
    for (auto& c : convs) {
        for (auto& v : c.kernels.span()) v *= factor;
        for (auto& v : c.bias) v *= factor;
    }
    score_bias *= factor;
    return *this;
}

template <typename T>
std::vector<double> ParamSet<T>::flatten() const {
    std::vector<double> out;
    out.reserve(count());
    for (const auto& c : convs) {
        out.insert(out.end(), c.kernels.span().begin(), c.kernels.span().end());
        out.insert(out.end(), c.bias.begin(), c.bias.end());
    }
    out.push_back(static_cast<double>(score_bias));
    return out;
}

template <typename T>
void ParamSet<T>::assign(std::span<const double> flat) {
    if (flat.size() != count()) {
        throw ShapeError("parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                         std::to_string(count()));
    }
    std::size_t k = 0;
    for (auto& c : convs) {
        for (auto& v : c.kernels.span()) v = static_cast<T>(flat[k++]);
        for (auto& v : c.bias) v = static_cast<T>(flat[k++]);
    }
    score_bias = static_cast<T>(flat[k]);
}

template <typename T>
T& ParamSet<T>::entry(std::size_t i) {
    for (auto& c : convs) {
        if (i < c.kernels.size()) return c.kernels[i];
        i -= c.kernels.size();
        if (i < c.bias.size()) return c.bias[i];
        i -= c.bias.size();
    }
    if (i == 0) return score_bias;
    throw ShapeError("parameter index out of range");
}

template <typename T>
bool ParamSet<T>::all_finite() const {
    for (const auto& c : convs) {
        if (!c.kernels.all_finite()) return false;
        for (T v : c.bias) {
            if (!std::isfinite(v)) return false;
        }
    }
    return std::isfinite(score_bias);
}

template <typename T>
BasicEmbedNet<T>::BasicEmbedNet(std::vector<LayerSpec> layers, std::size_t input_channels, ParamSet<T> params)
    : layers_(std::move(layers)), input_channels_(input_channels), params_(std::move(params)), id_(next_net_id()) {
    validate_chain(layers_, input_channels_);
    std::size_t channels = input_channels_;
    std::size_t conv = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].kind != LayerKind::conv) continue;
        if (conv >= params_.convs.size()) throw ShapeError("layer " + std::to_string(i) + ": missing parameters");
        const auto& p = params_.convs[conv++];
        const Shape expected{layers_[i].out_channels, channels, layers_[i].size, layers_[i].size};
        if (p.kernels.shape() != expected || p.bias.size() != layers_[i].out_channels) {
            throw ShapeError("layer " + std::to_string(i) + ": kernels " + p.kernels.shape().str() + " expected " +
                             expected.str());
        }
        channels = layers_[i].out_channels;
    }
    if (conv != params_.convs.size()) throw ShapeError("parameter set has more conv blocks than layers");
}

template <typename T>
BasicEmbedNet<T> BasicEmbedNet<T>::init(std::vector<LayerSpec> layers, std::uint64_t seed,
                                        std::size_t input_channels) {
    validate_chain(layers, input_channels);
    std::mt19937_64 rng(seed);
    ParamSet<T> params;
    std::size_t channels = input_channels;
    std::size_t convs = 0;
    for (const auto& l : layers) convs += l.kind == LayerKind::conv ? 1 : 0;
    for (const auto& l : layers) {
        if (l.kind != LayerKind::conv) continue;
        const std::size_t fan_in = channels * l.size * l.size;
        const double gain = params.convs.size() + 1 == convs ? kFinalLayerGain : 1.0;
        std::normal_distribution<double> normal(0.0, gain * std::sqrt(2.0 / static_cast<double>(fan_in)));
        ConvParams<T> p{BasicTensor<T>(l.out_channels, channels, l.size, l.size),
                        std::vector<T>(l.out_channels, T(0))};
        for (auto& v : p.kernels.span()) v = static_cast<T>(normal(rng));
        if (params.convs.empty()) {
            // Bias that centers [0, 1] inputs: conv(x - 1/2) = conv(x) - sum(k) / 2.
            const std::size_t per = fan_in;
            for (std::size_t o = 0; o < l.out_channels; ++o) {
                double sum = 0.0;
                for (std::size_t i = 0; i < per; ++i) sum += static_cast<double>(p.kernels[o * per + i]);
                p.bias[o] = static_cast<T>(-0.5 * sum);
            }
        }
        params.convs.push_back(std::move(p));
        channels = l.out_channels;
    }
    return BasicEmbedNet(std::move(layers), input_channels, std::move(params));
}

template <typename T>
std::size_t BasicEmbedNet<T>::output_channels() const {
    std::size_t channels = input_channels_;
    for (const auto& l : layers_) {
        if (l.kind == LayerKind::conv) channels = l.out_channels;
    }
    return channels;
}

template <typename T>
std::size_t BasicEmbedNet<T>::min_input() const {
    // Walk the chain backwards: the smallest input giving a 1x1 output.
    std::size_t extent = 1;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        if (it->kind == LayerKind::relu) continue;
        extent = (extent - 1) * it->stride + it->size;
    }
    return extent;
}

template <typename T>
template <typename U>
BasicEmbedNet<U> BasicEmbedNet<T>::cast() const {
    ParamSet<U> p;
    for (const auto& c : params_.convs) {
        p.convs.push_back({c.kernels.template cast<U>(), std::vector<U>(c.bias.begin(), c.bias.end())});
    }
    p.score_bias = static_cast<U>(params_.score_bias);
    return BasicEmbedNet<U>(layers_, input_channels_, std::move(p));
}

namespace {

template <typename T>
void check_image(const BasicEmbedNet<T>& net, const BasicTensor<T>& image) {
    const Shape& s = image.shape();
    if (s.c != net.input_channels()) {
        throw ShapeError("image " + s.str() + " has wrong channel count, net expects " +
                         std::to_string(net.input_channels()));
    }
    const std::size_t min = net.min_input();
    if (s.h < min || s.w < min) {
        throw ShapeError("image " + s.str() + " smaller than minimum network input " + std::to_string(min));
    }
}

template <typename T>
BasicTensor<T> run_chain(const BasicEmbedNet<T>& net, const BasicTensor<T>& image, ForwardCache<T>* cache) {
    BasicTensor<T> x = image;
    std::size_t conv = 0;
    const auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        if (cache) cache->input_shapes.push_back(x.shape());
        switch (l.kind) {
            case LayerKind::conv: {
                const auto& p = net.params().convs[conv++];
                BasicTensor<T> y = conv2d<T>(x, p.kernels, p.bias, l.stride);
                if (cache) {
                    cache->inputs.push_back(std::move(x));
                    cache->argmax.emplace_back();
                }
                x = std::move(y);
                break;
            }
            case LayerKind::relu: {
                BasicTensor<T> y = relu(x);
                if (cache) {
                    cache->inputs.push_back(std::move(x));
                    cache->argmax.emplace_back();
                }
                x = std::move(y);
                break;
            }
            case LayerKind::maxpool: {
                auto pooled = max_pool(x, l.size, l.stride);
                if (cache) {
                    cache->inputs.emplace_back();
                    cache->argmax.push_back(std::move(pooled.argmax));
                }
                x = std::move(pooled.output);
                break;
            }
        }
    }
    return x;
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const BasicEmbedNet<T>& net, const BasicTensor<T>& image) {
    check_image(net, image);
    ForwardResult<T> r;
    r.cache.net_id = net.id();
    r.cache.revision = net.revision();
    r.feature = run_chain(net, image, &r.cache);
    return r;
}

template <typename T>
BasicTensor<T> embed(const BasicEmbedNet<T>& net, const BasicTensor<T>& image) {
    check_image(net, image);
    return run_chain<T>(net, image, nullptr);
}

template <typename T>
ParamSet<T> backward(const BasicEmbedNet<T>& net, const ForwardCache<T>& cache, const BasicTensor<T>& upstream) {
    const auto& layers = net.layers();
    if (cache.net_id != net.id() || cache.revision != net.revision()) {
        throw ShapeError("stale forward cache: network parameters changed since the forward pass");
    }
    if (cache.inputs.size() != layers.size() || cache.input_shapes.size() != layers.size()) {
        throw ShapeError("forward cache does not match the layer chain");
    }
    ParamSet<T> grads = net.params().zeros_like();
    BasicTensor<T> g = upstream;
    std::size_t conv = net.params().convs.size();
    for (std::size_t i = layers.size(); i-- > 0;) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerKind::conv: {
                --conv;
                const auto& p = net.params().convs[conv];
                auto cg = conv2d_grad(cache.inputs[i], p.kernels, g, l.stride, i > 0);
                grads.convs[conv].kernels = std::move(cg.kernels);
                grads.convs[conv].bias = std::move(cg.bias);
                g = std::move(cg.input);
                break;
            }
            case LayerKind::relu:
                g = relu_grad(cache.inputs[i], g);
                break;
            case LayerKind::maxpool:
                g = max_pool_grad<T>(cache.input_shapes[i], cache.argmax[i], g);
                break;
        }
    }
    return grads;
}

// ---- serialization ----

namespace {

constexpr char kMagic[4] = {'Q', 'D', 'N', 'T'};

static_assert(std::endian::native == std::endian::little, "model I/O assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
    std::uint32_t u32() {
        if (pos_ + 4 > bytes_.size()) throw DataError("truncated model file");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const EmbedNet& net) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_u32(out, kModelVersion);
    put_u32(out, static_cast<std::uint32_t>(net.layers().size()));
    std::size_t channels = net.input_channels();
    for (const auto& l : net.layers()) {
        const std::size_t out_ch = l.kind == LayerKind::conv ? l.out_channels : channels;
        put_u32(out, static_cast<std::uint32_t>(l.kind));
        put_u32(out, static_cast<std::uint32_t>(channels));
        put_u32(out, static_cast<std::uint32_t>(out_ch));
        put_u32(out, static_cast<std::uint32_t>(l.size));
        put_u32(out, static_cast<std::uint32_t>(l.stride));
        channels = out_ch;
    }
    for (const auto& c : net.params().convs) {
        for (float v : c.kernels.span()) put_f32(out, v);
        for (float v : c.bias) put_f32(out, v);
    }
    put_f32(out, net.score_bias());
    return out;
}

EmbedNet deserialize_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError("bad magic in model file");
    Reader in(bytes.subspan(4));
    const std::uint32_t version = in.u32();
    if (version != kModelVersion) {
        throw DataError("unsupported version " + std::to_string(version) + " in model file");
    }
    const std::uint32_t count = in.u32();
    if (count == 0 || count > 4096) throw DataError("model file declares " + std::to_string(count) + " layers");
    std::vector<LayerSpec> layers;
    std::size_t input_channels = 0;
    std::vector<std::pair<std::size_t, std::size_t>> conv_channels;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t kind = in.u32();
        const std::uint32_t in_ch = in.u32();
        const std::uint32_t out_ch = in.u32();
        const std::uint32_t size = in.u32();
        const std::uint32_t stride = in.u32();
        if (i == 0) input_channels = in_ch;
        switch (static_cast<LayerKind>(kind)) {
            case LayerKind::conv:
                layers.push_back(LayerSpec::conv(out_ch, size, stride));
                conv_channels.emplace_back(in_ch, out_ch);
                break;
            case LayerKind::relu:
                layers.push_back(LayerSpec::relu());
                break;
            case LayerKind::maxpool:
                layers.push_back(LayerSpec::maxpool(size, stride));
                break;
            default:
                throw DataError("model file layer " + std::to_string(i) + " has unknown kind " + std::to_string(kind));
        }
    }
    ParamSet<float> params;
    std::size_t conv = 0;
    for (const auto& l : layers) {
        if (l.kind != LayerKind::conv) continue;
        const auto [in_ch, out_ch] = conv_channels[conv++];
        if (in_ch == 0 || out_ch == 0 || l.size == 0 || in_ch * l.size * l.size > (1u << 24)) {
            throw DataError("model file has an invalid conv layer");
        }
        ConvParams<float> p{Tensor(out_ch, in_ch, l.size, l.size), std::vector<float>(out_ch)};
        for (auto& v : p.kernels.span()) v = in.f32();
        for (auto& v : p.bias) v = in.f32();
        params.convs.push_back(std::move(p));
    }
    params.score_bias = in.f32();
    if (!in.done()) throw DataError("trailing bytes after model data");
    try {
        return EmbedNet(std::move(layers), input_channels, std::move(params));
    } catch (const ShapeError& e) {
        throw DataError(std::string("inconsistent model file: ") + e.what());
    }
}

void save_model(const EmbedNet& net, const std::filesystem::path& path) {
    const auto bytes = serialize_model(net);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed: " + path.string());
}

EmbedNet load_model(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open model file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

template struct ParamSet<float>;
template struct ParamSet<double>;
template class BasicEmbedNet<float>;
template class BasicEmbedNet<double>;
template BasicEmbedNet<double> BasicEmbedNet<float>::cast<double>() const;
template BasicEmbedNet<float> BasicEmbedNet<double>::cast<float>() const;
template BasicEmbedNet<float> BasicEmbedNet<float>::cast<float>() const;
template BasicEmbedNet<double> BasicEmbedNet<double>::cast<double>() const;
template ForwardResult<float> forward(const EmbedNet&, const Tensor&);
template ForwardResult<double> forward(const EmbedNet64&, const Tensor64&);
template Tensor embed(const EmbedNet&, const Tensor&);
template Tensor64 embed(const EmbedNet64&, const Tensor64&);
template ParamSet<float> backward(const EmbedNet&, const ForwardCache<float>&, const Tensor&);
template ParamSet<double> backward(const EmbedNet64&, const ForwardCache<double>&, const Tensor64&);

}  // namespace quadtrack
