#include "quadtrack/tensor_ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <string>

namespace quadtrack {

std::string Shape::str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

std::size_t valid_extent(std::size_t in, std::size_t window, std::size_t stride) {
    if (stride == 0) throw ShapeError("stride must be positive");
    if (window == 0 || window > in) {
        throw ShapeError("window " + std::to_string(window) + " does not fit extent " + std::to_string(in));
    }
    return (in - window) / stride + 1;
}

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
    std::size_t channels, in_h, in_w, kh, kw, out_h, out_w, stride;
    std::size_t patch() const { return channels * kh * kw; }
    std::size_t positions() const { return out_h * out_w; }
};

template <typename T>
ConvGeometry check_conv(const BasicTensor<T>& input, const BasicTensor<T>& kernels, std::size_t stride) {
    const Shape& in = input.shape();
    const Shape& k = kernels.shape();
    if (k.c != in.c || k.h > in.h || k.w > in.w || k.h == 0 || k.w == 0 || k.n == 0) {
        throw ShapeError("conv2d shape mismatch: input " + in.str() + " vs kernels " + k.str());
    }
    if (stride == 0) throw ShapeError("conv2d stride must be positive");
    return {in.c, in.h, in.w, k.h, k.w, valid_extent(in.h, k.h, stride), valid_extent(in.w, k.w, stride), stride};
}

// Unfold one batch item into a (C*kh*kw) x (out_h*out_w) row-major matrix.
template <typename T>
void im2col(const T* src, const ConvGeometry& g, T* cols) {
    const std::size_t positions = g.positions();
    for (std::size_t c = 0; c < g.channels; ++c) {
        const T* plane = src + c * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                T* row = cols + ((c * g.kh + ky) * g.kw + kx) * positions;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const T* line = plane + (oy * g.stride + ky) * g.in_w + kx;
                    T* dst = row + oy * g.out_w;
                    if (g.stride == 1) {
                        std::copy(line, line + g.out_w, dst);
                    } else {
                        for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[ox] = line[ox * g.stride];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* dst) {
    const std::size_t positions = g.positions();
    for (std::size_t c = 0; c < g.channels; ++c) {
        T* plane = dst + c * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const T* row = cols + ((c * g.kh + ky) * g.kw + kx) * positions;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    T* line = plane + (oy * g.stride + ky) * g.in_w + kx;
                    const T* src = row + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) line[ox * g.stride] += src[ox];
                }
            }
        }
    }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels, std::span<const T> bias,
                      std::size_t stride) {
    const ConvGeometry g = check_conv(input, kernels, stride);
    const std::size_t out_c = kernels.shape().n;
    if (bias.size() != out_c) {
        throw ShapeError("conv2d bias has " + std::to_string(bias.size()) + " entries, kernels " +
                         kernels.shape().str());
    }
    const std::size_t batch = input.shape().n;
    BasicTensor<T> out(batch, out_c, g.out_h, g.out_w);
    std::vector<T> cols(g.patch() * g.positions());
    ConstMatMap<T> k(kernels.data(), out_c, g.patch());
    for (std::size_t b = 0; b < batch; ++b) {
        im2col(input.plane(b, 0), g, cols.data());
        ConstMatMap<T> c(cols.data(), g.patch(), g.positions());
        MatMap<T> o(out.plane(b, 0), out_c, g.positions());
        o.noalias() = k * c;
        for (std::size_t oc = 0; oc < out_c; ++oc) o.row(oc).array() += bias[oc];
    }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_grad(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                         const BasicTensor<T>& upstream, std::size_t stride, bool want_input_grad) {
    const ConvGeometry g = check_conv(input, kernels, stride);
    const std::size_t out_c = kernels.shape().n;
    const std::size_t batch = input.shape().n;
    const Shape expected{batch, out_c, g.out_h, g.out_w};
    if (upstream.shape() != expected) {
        throw ShapeError("conv2d_grad upstream " + upstream.shape().str() + " does not match output " +
                         expected.str());
    }
    ConvGrads<T> grads;
    grads.kernels = BasicTensor<T>(kernels.shape());
    grads.bias.assign(out_c, T(0));
    if (want_input_grad) grads.input = BasicTensor<T>(input.shape());

    std::vector<T> cols(g.patch() * g.positions());
    ConstMatMap<T> k(kernels.data(), out_c, g.patch());
    // Reductions over output positions run in blocks whose partial sums are
    // accumulated in double; a 123x123 map is too long a sum for float.
    constexpr std::size_t kBlock = 512;
    RowMatrix<double> dk_acc = RowMatrix<double>::Zero(out_c, g.patch());
    std::vector<double> bias_acc(out_c, 0.0);
    RowMatrix<T> part(out_c, g.patch());
    for (std::size_t b = 0; b < batch; ++b) {
        ConstMatMap<T> up(upstream.plane(b, 0), out_c, g.positions());
        im2col(input.plane(b, 0), g, cols.data());
        ConstMatMap<T> c(cols.data(), g.patch(), g.positions());
        for (std::size_t start = 0; start < g.positions(); start += kBlock) {
            const auto len = static_cast<Eigen::Index>(std::min(kBlock, g.positions() - start));
            const auto s0 = static_cast<Eigen::Index>(start);
            part.noalias() = up.middleCols(s0, len) * c.middleCols(s0, len).transpose();
            dk_acc += part.template cast<double>();
            // Plain loop: a vectorized sum over an unaligned segment rounds differently per address.
            for (std::size_t oc = 0; oc < out_c; ++oc) {
                const T* row = upstream.plane(b, 0) + oc * g.positions() + start;
                T sum = T(0);
                for (Eigen::Index i = 0; i < len; ++i) sum += row[i];
                bias_acc[oc] += static_cast<double>(sum);
            }
        }
        if (want_input_grad) {
            MatMap<T> dcols(cols.data(), g.patch(), g.positions());
            dcols.noalias() = k.transpose() * up;
            col2im(cols.data(), g, grads.input.plane(b, 0));
        }
    }
    MatMap<T>(grads.kernels.data(), out_c, g.patch()) = dk_acc.template cast<T>();
    for (std::size_t oc = 0; oc < out_c; ++oc) grads.bias[oc] = static_cast<T>(bias_acc[oc]);
    return grads;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
    BasicTensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
    return out;
}

template <typename T>
BasicTensor<T> relu_grad(const BasicTensor<T>& input, const BasicTensor<T>& upstream) {
    if (input.shape() != upstream.shape()) {
        throw ShapeError("relu_grad shape mismatch: " + input.shape().str() + " vs " + upstream.shape().str());
    }
    BasicTensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? upstream[i] : T(0);
    return out;
}

template <typename T>
PoolResult<T> max_pool(const BasicTensor<T>& input, std::size_t window, std::size_t stride) {
    const Shape& s = input.shape();
    if (window == 0 || window > s.h || window > s.w) {
        throw ShapeError("max_pool window " + std::to_string(window) + " larger than input " + s.str());
    }
    const std::size_t oh = valid_extent(s.h, window, stride);
    const std::size_t ow = valid_extent(s.w, window, stride);
    PoolResult<T> r{BasicTensor<T>(s.n, s.c, oh, ow), {}};
    r.argmax.resize(r.output.size());
    std::size_t o = 0;
    for (std::size_t b = 0; b < s.n; ++b) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const std::size_t base = input.index(b, c, 0, 0);
            const T* plane = input.data() + base;
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
                    std::size_t best = oy * stride * s.w + ox * stride;
                    T best_v = plane[best];
                    for (std::size_t ky = 0; ky < window; ++ky) {
                        for (std::size_t kx = 0; kx < window; ++kx) {
                            const std::size_t idx = (oy * stride + ky) * s.w + ox * stride + kx;
                            if (plane[idx] > best_v) {
                                best_v = plane[idx];
                                best = idx;
                            }
                        }
                    }
                    r.output[o] = best_v;
                    r.argmax[o] = static_cast<std::uint32_t>(base + best);
                }
            }
        }
    }
    return r;
}

template <typename T>
BasicTensor<T> max_pool_grad(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                             const BasicTensor<T>& upstream) {
    if (argmax.size() != upstream.size()) {
        throw ShapeError("max_pool_grad: " + std::to_string(argmax.size()) + " argmax entries vs upstream " +
                         upstream.shape().str());
    }
    BasicTensor<T> out(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        if (argmax[i] >= out.size()) throw ShapeError("max_pool_grad: argmax index out of range");
        out[argmax[i]] += upstream[i];
    }
    return out;
}

double cubic_weight(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

namespace {

struct Taps {
    std::array<std::size_t, 4> index;
    std::array<double, 4> weight;
};

std::vector<Taps> make_taps(std::size_t in_n, std::size_t out_n) {
    std::vector<Taps> taps(out_n);
    const double step = static_cast<double>(in_n) / static_cast<double>(out_n);
    const auto last = static_cast<long>(in_n) - 1;
    for (std::size_t o = 0; o < out_n; ++o) {
        const double pos = static_cast<double>(o) * step;
        const double base = std::floor(pos);
        const double t = pos - base;
        for (int k = 0; k < 4; ++k) {
            const long src = static_cast<long>(base) + k - 1;
            taps[o].index[k] = static_cast<std::size_t>(std::clamp(src, 0L, last));
            taps[o].weight[k] = cubic_weight(t - static_cast<double>(k - 1));
        }
    }
    return taps;
}

}  // namespace

template <typename T>
BasicGrid<T> bicubic_resize(const BasicGrid<T>& input, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ShapeError("bicubic_resize: requested size must be non-zero");
    if (input.rows() < 2 || input.cols() < 2) throw ShapeError("bicubic_resize: input must be at least 2x2");
    const auto rows = make_taps(input.rows(), out_h);
    const auto cols = make_taps(input.cols(), out_w);

    // Horizontal pass in double, then vertical.
    std::vector<double> tmp(input.rows() * out_w);
    for (std::size_t r = 0; r < input.rows(); ++r) {
        for (std::size_t o = 0; o < out_w; ++o) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) acc += cols[o].weight[k] * static_cast<double>(input(r, cols[o].index[k]));
            tmp[r * out_w + o] = acc;
        }
    }
    BasicGrid<T> out(out_h, out_w);
    for (std::size_t o = 0; o < out_h; ++o) {
        for (std::size_t c = 0; c < out_w; ++c) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) acc += rows[o].weight[k] * tmp[rows[o].index[k] * out_w + c];
            out(o, c) = static_cast<T>(acc);
        }
    }
    return out;
}

namespace {

template <typename T>
void check_correlation(const BasicTensor<T>& exemplar, const BasicTensor<T>& search) {
    const Shape& z = exemplar.shape();
    const Shape& x = search.shape();
    if (z.n != 1 || x.n != 1) throw ShapeError("cross_correlate expects batch 1, got " + z.str() + " / " + x.str());
    if (z.c != x.c) {
        throw ShapeError("cross_correlate channel mismatch: exemplar " + z.str() + " vs search " + x.str());
    }
    if (z.h > x.h || z.w > x.w || z.h == 0 || z.w == 0) {
        throw ShapeError("cross_correlate exemplar " + z.str() + " larger than search " + x.str());
    }
}

}  // namespace

template <typename T>
BasicGrid<T> cross_correlate(const BasicTensor<T>& exemplar, const BasicTensor<T>& search) {
    check_correlation(exemplar, search);
    const Shape& z = exemplar.shape();
    const Shape& x = search.shape();
    BasicGrid<T> out(x.h - z.h + 1, x.w - z.w + 1);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
            double acc = 0.0;
            for (std::size_t ch = 0; ch < z.c; ++ch) {
                const T* zp = exemplar.plane(0, ch);
                const T* xp = search.plane(0, ch);
                for (std::size_t i = 0; i < z.h; ++i) {
                    for (std::size_t j = 0; j < z.w; ++j) {
                        acc += static_cast<double>(zp[i * z.w + j]) * static_cast<double>(xp[(r + i) * x.w + c + j]);
                    }
                }
            }
            out(r, c) = static_cast<T>(acc);
        }
    }
    return out;
}

template <typename T>
CorrelationGrads<T> cross_correlate_grad(const BasicGrid<T>& upstream, const BasicTensor<T>& exemplar,
                                         const BasicTensor<T>& search) {
    check_correlation(exemplar, search);
    const Shape& z = exemplar.shape();
    const Shape& x = search.shape();
    if (upstream.rows() != x.h - z.h + 1 || upstream.cols() != x.w - z.w + 1) {
        throw ShapeError("cross_correlate_grad upstream " + std::to_string(upstream.rows()) + "x" +
                         std::to_string(upstream.cols()) + " does not match score map");
    }
    CorrelationGrads<T> g{BasicTensor<T>(z), BasicTensor<T>(x)};
    for (std::size_t r = 0; r < upstream.rows(); ++r) {
        for (std::size_t c = 0; c < upstream.cols(); ++c) {
            const T u = upstream(r, c);
            if (u == T(0)) continue;
            for (std::size_t ch = 0; ch < z.c; ++ch) {
                const T* zp = exemplar.plane(0, ch);
                const T* xp = search.plane(0, ch);
                T* dz = g.exemplar.plane(0, ch);
                T* dx = g.search.plane(0, ch);
                for (std::size_t i = 0; i < z.h; ++i) {
                    for (std::size_t j = 0; j < z.w; ++j) {
                        const std::size_t xi = (r + i) * x.w + c + j;
                        dz[i * z.w + j] += u * xp[xi];
                        dx[xi] += u * zp[i * z.w + j];
                    }
                }
            }
        }
    }
    return g;
}

double central_difference(const std::function<double(double)>& f_of_offset, double epsilon) {
    return (f_of_offset(epsilon) - f_of_offset(-epsilon)) / (2.0 * epsilon);
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> point, double epsilon) {
    if (!(epsilon > 0.0)) throw ShapeError("finite_diff_grad: epsilon must be positive");
    std::vector<double> x(point.begin(), point.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        grad[i] = central_difference(
            [&](double d) {
                x[i] = orig + d;
                const double v = f(x);
                x[i] = orig;
                return v;
            },
            epsilon);
    }
    return grad;
}

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    if (denom == 0.0) return 0.0;
    return std::abs(analytic - numeric) / denom;
}

#define QUADTRACK_INSTANTIATE(T)                                                                                  \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::span<const T>,           \
                                   std::size_t);                                                               \
    template ConvGrads<T> conv2d_grad(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,    \
                                      std::size_t, bool);                                                      \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                                       \
    template BasicTensor<T> relu_grad(const BasicTensor<T>&, const BasicTensor<T>&);                           \
    template PoolResult<T> max_pool(const BasicTensor<T>&, std::size_t, std::size_t);                          \
    template BasicTensor<T> max_pool_grad(const Shape&, std::span<const std::uint32_t>, const BasicTensor<T>&); \
    template BasicGrid<T> bicubic_resize(const BasicGrid<T>&, std::size_t, std::size_t);                       \
    template BasicGrid<T> cross_correlate(const BasicTensor<T>&, const BasicTensor<T>&);                       \
    template CorrelationGrads<T> cross_correlate_grad(const BasicGrid<T>&, const BasicTensor<T>&,              \
                                                      const BasicTensor<T>&);

QUADTRACK_INSTANTIATE(float)
QUADTRACK_INSTANTIATE(double)

#undef QUADTRACK_INSTANTIATE

}  // namespace quadtrack
