#include "quadtrack/geometry.hpp"

#include <cmath>

namespace quadtrack {

double context_side(double w, double h) {
    const double p = (w + h) / 2.0;
    return std::sqrt((w + p) * (h + p));
}

Rgb channel_mean(const Tensor& frame) {
    const Shape& s = frame.shape();
    if (s.n != 1 || s.c == 0 || s.c > 3) throw ShapeError("channel_mean expects a 1 x C x H x W frame, got " + s.str());
    Rgb mean{0.f, 0.f, 0.f};
    for (std::size_t c = 0; c < s.c; ++c) {
        double acc = 0.0;
        const float* p = frame.plane(0, c);
        for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
        mean[c] = static_cast<float>(acc / static_cast<double>(s.plane()));
    }
    for (std::size_t c = s.c; c < 3; ++c) mean[c] = mean[0];
    return mean;
}

Tensor crop_resize(const Tensor& frame, double cx, double cy, double side, std::size_t out_size, const Rgb& fill) {
    const Shape& s = frame.shape();
    if (s.n != 1 || s.c != 3) throw ShapeError("crop_resize expects a 1 x 3 x H x W frame, got " + s.str());
    if (!(side > 0.0) || out_size == 0 || !std::isfinite(cx) || !std::isfinite(cy)) {
        throw ShapeError("crop_resize: degenerate crop region");
    }
    const double step = side / static_cast<double>(out_size);
    const double origin_x = cx - side / 2.0;
    const double origin_y = cy - side / 2.0;
    const auto width = static_cast<long>(s.w);
    const auto height = static_cast<long>(s.h);

    // Precompute the two bilinear taps per output column / row; -1 marks outside.
    struct Tap {
        long i0, i1;
        float t;
    };
    auto taps = [&](double origin, long extent) {
        std::vector<Tap> out(out_size);
        for (std::size_t p = 0; p < out_size; ++p) {
            // Continuous coordinate of the sample, shifted to pixel-center indexing.
            const double pos = origin + (static_cast<double>(p) + 0.5) * step - 0.5;
            const double base = std::floor(pos);
            const long i0 = static_cast<long>(base);
            const long i1 = i0 + 1;
            out[p] = {(i0 >= 0 && i0 < extent) ? i0 : -1, (i1 >= 0 && i1 < extent) ? i1 : -1,
                      static_cast<float>(pos - base)};
        }
        return out;
    };
    const auto xs = taps(origin_x, width);
    const auto ys = taps(origin_y, height);

    Tensor out(1, 3, out_size, out_size);
    for (std::size_t c = 0; c < 3; ++c) {
        const float* src = frame.plane(0, c);
        float* dst = out.plane(0, c);
        const float f = fill[c];
        for (std::size_t r = 0; r < out_size; ++r) {
            const Tap& ty = ys[r];
            const float* row0 = ty.i0 >= 0 ? src + ty.i0 * width : nullptr;
            const float* row1 = ty.i1 >= 0 ? src + ty.i1 * width : nullptr;
            for (std::size_t q = 0; q < out_size; ++q) {
                const Tap& tx = xs[q];
                const float v00 = (row0 && tx.i0 >= 0) ? row0[tx.i0] : f;
                const float v01 = (row0 && tx.i1 >= 0) ? row0[tx.i1] : f;
                const float v10 = (row1 && tx.i0 >= 0) ? row1[tx.i0] : f;
                const float v11 = (row1 && tx.i1 >= 0) ? row1[tx.i1] : f;
                const float top = v00 + (v01 - v00) * tx.t;
                const float bottom = v10 + (v11 - v10) * tx.t;
                dst[r * out_size + q] = top + (bottom - top) * ty.t;
            }
        }
    }
    return out;
}

Tensor to_grayscale(const Tensor& image) {
    const Shape& s = image.shape();
    if (s.c != 3) throw ShapeError("to_grayscale expects 3 channels, got " + s.str());
    Tensor out(s);
    for (std::size_t b = 0; b < s.n; ++b) {
        const float* r = image.plane(b, 0);
        const float* g = image.plane(b, 1);
        const float* bl = image.plane(b, 2);
        for (std::size_t i = 0; i < s.plane(); ++i) {
            const float y = 0.299f * r[i] + 0.587f * g[i] + 0.114f * bl[i];
            out.plane(b, 0)[i] = y;
            out.plane(b, 1)[i] = y;
            out.plane(b, 2)[i] = y;
        }
    }
    return out;
}

}  // namespace quadtrack
