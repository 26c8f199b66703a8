#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "quadtrack/error.hpp"

namespace quadtrack {

/// Shape of a 4-D tensor in (batch, channels, height, width) order.
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t size() const { return n * c * h * w; }
    std::size_t plane() const { return h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Dense row-major (batch-outer) tensor. The scalar type is a template
/// parameter so that gradient checks can re-run the same code in double.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
    BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_.str());
        }
    }
    BasicTensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
        : BasicTensor(Shape{n, c, h, w}, fill) {}

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const {
        return ((b * shape_.c + ch) * shape_.h + y) * shape_.w + x;
    }
    T& at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) { return data_[index(b, ch, y, x)]; }
    const T& at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const {
        return data_[index(b, ch, y, x)];
    }

    // Pointer to the (b, ch) plane.
    T* plane(std::size_t b, std::size_t ch) { return data_.data() + (b * shape_.c + ch) * shape_.plane(); }
    const T* plane(std::size_t b, std::size_t ch) const {
        return data_.data() + (b * shape_.c + ch) * shape_.plane();
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(shape_, std::move(out));
    }

    bool operator==(const BasicTensor&) const = default;

private:
    Shape shape_{};
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Single-channel 2-D grid (score maps, label maps, weight maps).
template <typename T>
class BasicGrid {
public:
    BasicGrid() = default;
    BasicGrid(std::size_t rows, std::size_t cols, T fill = T(0))
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    BasicGrid(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("grid data length " + std::to_string(data_.size()) + " does not match " +
                             std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    const std::vector<T>& values() const { return data_; }

    bool same_shape(const auto& other) const { return rows_ == other.rows() && cols_ == other.cols(); }

    template <typename U>
    BasicGrid<U> cast() const {
        return BasicGrid<U>(rows_, cols_, std::vector<U>(data_.begin(), data_.end()));
    }

    bool operator==(const BasicGrid&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Grid = BasicGrid<float>;
using Grid64 = BasicGrid<double>;

struct Cell {
    std::size_t row = 0;
    std::size_t col = 0;
    bool operator==(const Cell&) const = default;
};

}  // namespace quadtrack
