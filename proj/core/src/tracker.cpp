#include "quadtrack/tracker.hpp"

#include <cmath>
#include <numbers>

#include "quadtrack/tensor_ops.hpp"
#include "quadtrack/xcorr_head.hpp"

namespace quadtrack {

TrackerConfig TrackerConfig::from_config(const KeyValueConfig& cfg) {
    TrackerConfig t;
    t.scale_step = cfg.get_double("scale_step", t.scale_step);
    t.num_scales = static_cast<std::size_t>(cfg.get_int("num_scales", static_cast<long long>(t.num_scales)));
    t.scale_damping = cfg.get_double("scale_damping", t.scale_damping);
    t.upsample_factor =
        static_cast<std::size_t>(cfg.get_int("upsample_factor", static_cast<long long>(t.upsample_factor)));
    t.window_influence = cfg.get_double("window_influence", t.window_influence);
    t.validate();
    return t;
}

void TrackerConfig::validate() const {
    if (!(scale_step >= 1.0) || num_scales == 0 || num_scales % 2 == 0) {
        throw ShapeError("tracker: scale_step must be >= 1 and num_scales odd");
    }
    if (!(scale_damping >= 0.0 && scale_damping <= 1.0)) throw ShapeError("tracker: scale_damping outside [0, 1]");
    if (upsample_factor == 0) throw ShapeError("tracker: upsample_factor must be positive");
    if (!(window_influence >= 0.0 && window_influence <= 1.0)) {
        throw ShapeError("tracker: window_influence outside [0, 1]");
    }
}

std::vector<double> TrackerConfig::scales() const {
    std::vector<double> s;
    const auto half = static_cast<int>(num_scales / 2);
    for (int k = -half; k <= half; ++k) s.push_back(std::pow(scale_step, k));
    return s;
}

Peak locate_peak(const Grid& scores, std::size_t total_stride, std::size_t upsample_factor,
                 double window_influence) {
    const std::size_t up_h = scores.rows() * upsample_factor;
    const std::size_t up_w = scores.cols() * upsample_factor;
    Grid up = bicubic_resize(scores, up_h, up_w);
    if (window_influence > 0.0) {
        // Min-max normalize, then blend with a Hann window centered on the map center.
        float lo = up[0];
        float hi = up[0];
        for (float v : up.span()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const float range = hi > lo ? hi - lo : 1.0f;
        const double cr = (static_cast<double>(scores.rows()) - 1.0) / 2.0 * static_cast<double>(upsample_factor);
        const double cc = (static_cast<double>(scores.cols()) - 1.0) / 2.0 * static_cast<double>(upsample_factor);
        for (std::size_t r = 0; r < up_h; ++r) {
            const double wr = 0.5 + 0.5 * std::cos(std::numbers::pi * (static_cast<double>(r) - cr) / (cr + 1.0));
            for (std::size_t c = 0; c < up_w; ++c) {
                const double wc =
                    0.5 + 0.5 * std::cos(std::numbers::pi * (static_cast<double>(c) - cc) / (cc + 1.0));
                const double norm = (up(r, c) - lo) / range;
                up(r, c) = static_cast<float>((1.0 - window_influence) * norm +
                                              window_influence * std::max(0.0, wr) * std::max(0.0, wc));
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < up.size(); ++i) {
        if (up[i] > up[best]) best = i;
    }
    Peak p;
    p.row = best / up_w;
    p.col = best % up_w;
    p.score = up[best];
    const double factor = static_cast<double>(upsample_factor);
    const double center_r = (static_cast<double>(scores.rows()) - 1.0) / 2.0 * factor;
    const double center_c = (static_cast<double>(scores.cols()) - 1.0) / 2.0 * factor;
    const double step = static_cast<double>(total_stride) / factor;
    p.dy = (static_cast<double>(p.row) - center_r) * step;
    p.dx = (static_cast<double>(p.col) - center_c) * step;
    return p;
}

TrackState track_init(const EmbedNet& net, const Tensor& frame, const BoundingBox& box) {
    if (!box.valid()) throw ShapeError("track_init: box must have positive width and height");
    TrackState s;
    s.cx = box.cx();
    s.cy = box.cy();
    s.base_w = box.w;
    s.base_h = box.h;
    s.exemplar_side = context_side(box.w, box.h);
    const Tensor crop = crop_resize(frame, s.cx, s.cy, s.exemplar_side, kExemplarSize, channel_mean(frame));
    s.exemplar_feature = embed(net, crop);
    s.exemplar_forwards = 1;
    return s;
}

BoundingBox track_step(const EmbedNet& net, TrackState& state, const Tensor& frame, const TrackerConfig& cfg) {
    if (state.exemplar_forwards == 0) throw ShapeError("track_step: state not initialized");
    const Rgb fill = channel_mean(frame);
    const auto scales = cfg.scales();
    const std::size_t mid = scales.size() / 2;
    // Evaluation order encodes the tie-break: scale 1 first, then ascending.
    std::vector<std::size_t> order{mid};
    for (std::size_t i = 0; i < scales.size(); ++i) {
        if (i != mid) order.push_back(i);
    }
    const double base_search_side =
        state.exemplar_side * static_cast<double>(kSearchSize) / static_cast<double>(kExemplarSize);

    Peak best;
    std::size_t best_scale = mid;
    bool first = true;
    for (std::size_t k : order) {
        const double side = base_search_side * state.scale * scales[k];
        const Tensor crop = crop_resize(frame, state.cx, state.cy, side, kSearchSize, fill);
        const Tensor feat = embed(net, crop);
        const ScoreMap m = score_map(net, state.exemplar_feature, feat);
        const Peak p = locate_peak(m.values, net.total_stride(), cfg.upsample_factor, cfg.window_influence);
        if (first || p.score > best.score) {
            best = p;
            best_scale = k;
            first = false;
        }
    }
    const double side = base_search_side * state.scale * scales[best_scale];
    const double to_frame = side / static_cast<double>(kSearchSize);
    state.cx += best.dx * to_frame;
    state.cy += best.dy * to_frame;
    const double gamma = cfg.scale_damping;
    state.scale = (1.0 - gamma) * state.scale + gamma * state.scale * scales[best_scale];
    ++state.frames_tracked;
    return state.box();
}

std::vector<BoundingBox> track_sequence(const EmbedNet& net, const std::vector<Tensor>& frames,
                                        const BoundingBox& init_box, const TrackerConfig& cfg) {
    return track_frames(net, frames.size(), [&](std::size_t i) -> const Tensor& { return frames[i]; }, init_box,
                        cfg);
}

}  // namespace quadtrack
