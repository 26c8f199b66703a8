#pragma once

#include <cstdint>
#include <vector>

#include "quadtrack/embed_net.hpp"
#include "quadtrack/geometry.hpp"
#include "quadtrack/kv_config.hpp"
#include "quadtrack/tensor.hpp"

namespace quadtrack {

struct TrackerConfig {
    double scale_step = 1.0375;
    std::size_t num_scales = 3;      // odd; scales step^{-(n/2)} .. step^{n/2}
    double scale_damping = 0.59;     // weight of the chosen scale in the update
    std::size_t upsample_factor = 16;  // 17x17 -> 272x272
    double window_influence = 0.0;   // optional cosine window blend, off by default

    static TrackerConfig from_config(const KeyValueConfig& cfg);
    void validate() const;
    std::vector<double> scales() const;
};

/// Argmax of the bicubic-upsampled score map, as a displacement from the map
/// center in search-image pixels: (peak - center) * total_stride / factor,
/// where center = (n - 1) / 2 * factor.
struct Peak {
    double dx = 0.0;
    double dy = 0.0;
    double score = 0.0;
    std::size_t row = 0;  // upsampled-map coordinates
    std::size_t col = 0;
};

Peak locate_peak(const Grid& scores, std::size_t total_stride, std::size_t upsample_factor,
                 double window_influence = 0.0);

struct TrackState {
    Tensor exemplar_feature;  // phi(z), computed once in track_init
    double cx = 0.0;
    double cy = 0.0;
    double base_w = 0.0;  // target size at initialization
    double base_h = 0.0;
    double scale = 1.0;   // current size multiplier
    double exemplar_side = 0.0;
    std::size_t exemplar_forwards = 0;
    std::size_t frames_tracked = 0;

    BoundingBox box() const { return BoundingBox::from_center(cx, cy, base_w * scale, base_h * scale); }
};

TrackState track_init(const EmbedNet& net, const Tensor& frame, const BoundingBox& box);

/// Searches the configured scale pyramid around the current position and
/// returns the new box. Ties across scales prefer scale 1, then smaller.
BoundingBox track_step(const EmbedNet& net, TrackState& state, const Tensor& frame,
                       const TrackerConfig& cfg = {});

/// One box per frame; the first is `init_box`. `frames` supplies frame i on demand.
template <typename FrameSource>
std::vector<BoundingBox> track_frames(const EmbedNet& net, std::size_t count, FrameSource&& frames,
                                      const BoundingBox& init_box, const TrackerConfig& cfg = {}) {
    std::vector<BoundingBox> out;
    if (count == 0) return out;
    out.reserve(count);
    TrackState state = track_init(net, frames(std::size_t{0}), init_box);
    out.push_back(init_box);
    for (std::size_t i = 1; i < count; ++i) out.push_back(track_step(net, state, frames(i), cfg));
    return out;
}

std::vector<BoundingBox> track_sequence(const EmbedNet& net, const std::vector<Tensor>& frames,
                                        const BoundingBox& init_box, const TrackerConfig& cfg = {});

}  // namespace quadtrack
