#pragma once

// Dense kernels the embedding network is built from. Every "convolution" here
// is a cross-correlation (no kernel flip) without padding.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "quadtrack/tensor.hpp"

namespace quadtrack {

/// Output extent of a valid (unpadded) window sweep.
std::size_t valid_extent(std::size_t in, std::size_t window, std::size_t stride);

/// Valid convolution. `kernels` is O x C x kh x kw, `bias` has O entries.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels, std::span<const T> bias,
                      std::size_t stride);

template <typename T>
struct ConvGrads {
    BasicTensor<T> input;    // empty when not requested
    BasicTensor<T> kernels;
    std::vector<T> bias;
};

/// Gradients of sum(upstream * conv2d(input, kernels, bias, stride)).
/// Skipping the input gradient saves a col2im pass for the first layer.
template <typename T>
ConvGrads<T> conv2d_grad(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                         const BasicTensor<T>& upstream, std::size_t stride, bool want_input_grad = true);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> relu_grad(const BasicTensor<T>& input, const BasicTensor<T>& upstream);

template <typename T>
struct PoolResult {
    BasicTensor<T> output;
    std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// Max pooling; ties resolve to the first element in row-major scan order.
template <typename T>
PoolResult<T> max_pool(const BasicTensor<T>& input, std::size_t window, std::size_t stride);

template <typename T>
BasicTensor<T> max_pool_grad(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                             const BasicTensor<T>& upstream);

/// Catmull-Rom (a = -0.5) bicubic resampling with clamp-to-edge borders.
/// Output pixel o samples input coordinate o * in/out, so input cell k lands
/// exactly on output pixel k * (out/in) for integer factors.
template <typename T>
BasicGrid<T> bicubic_resize(const BasicGrid<T>& input, std::size_t out_h, std::size_t out_w);

/// Cubic convolution kernel weight at distance x (a = -0.5).
double cubic_weight(double x);

/// Valid sliding inner product of a 1 x C x h x w exemplar over a 1 x C x H x W
/// search feature. Accumulates in double in (channel, row, col) order.
template <typename T>
BasicGrid<T> cross_correlate(const BasicTensor<T>& exemplar, const BasicTensor<T>& search);

template <typename T>
struct CorrelationGrads {
    BasicTensor<T> exemplar;
    BasicTensor<T> search;
};

template <typename T>
CorrelationGrads<T> cross_correlate_grad(const BasicGrid<T>& upstream, const BasicTensor<T>& exemplar,
                                         const BasicTensor<T>& search);

/// Central difference (f(+eps) - f(-eps)) / 2eps of a scalar function of a
/// single offset. Building block of every gradient oracle.
double central_difference(const std::function<double(double)>& f_of_offset, double epsilon);

/// Central-difference gradient of f at `point`, one coordinate at a time, in double.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> point, double epsilon);

/// Symmetric relative error with an absolute floor: |a - b| / max(|a|, |b|, floor).
double relative_error(double analytic, double numeric, double floor);

}  // namespace quadtrack
