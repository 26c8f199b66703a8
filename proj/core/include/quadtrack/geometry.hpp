#pragma once

#include <array>

#include "quadtrack/tensor.hpp"

namespace quadtrack {

/// Axis-aligned box, 0-based pixel coordinates. Pixel k spans [k, k+1).
struct BoundingBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double cx() const { return x + w / 2.0; }
    double cy() const { return y + h / 2.0; }
    double area() const { return w * h; }
    bool valid() const { return w > 0.0 && h > 0.0; }

    static BoundingBox from_center(double cx, double cy, double w, double h) {
        return {cx - w / 2.0, cy - h / 2.0, w, h};
    }
    bool operator==(const BoundingBox&) const = default;
};

using Rgb = std::array<float, 3>;

/// Side of the square context region around a w x h target:
/// sqrt((w + p)(h + p)) with p = (w + h) / 2.
double context_side(double w, double h);

/// Per-channel mean of a 1 x C x H x W frame (C <= 3).
Rgb channel_mean(const Tensor& frame);

/// Samples the square region of side `side` centered at (cx, cy) into an
/// out_size x out_size image by bilinear interpolation. Pixels outside the
/// frame take `fill`. Output pixel p sits at frame coordinate
/// center + (p + 0.5 - out_size / 2) * side / out_size.
Tensor crop_resize(const Tensor& frame, double cx, double cy, double side, std::size_t out_size, const Rgb& fill);

/// Rec. 601 luma replicated across the three channels.
Tensor to_grayscale(const Tensor& image);

}  // namespace quadtrack
