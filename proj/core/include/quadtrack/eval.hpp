#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "quadtrack/data_io.hpp"
#include "quadtrack/geometry.hpp"
#include "quadtrack/tracker.hpp"

namespace quadtrack {

double iou(const BoundingBox& a, const BoundingBox& b);
double center_error(const BoundingBox& a, const BoundingBox& b);

inline constexpr std::size_t kPrecisionThresholds = 51;  // 0..50 px
inline constexpr std::size_t kSuccessThresholds = 21;    // 0, 0.05, .., 1
double precision_threshold(std::size_t i);
double success_threshold(std::size_t i);

struct Curves {
    std::vector<double> precision;  // fraction with center error <= t
    std::vector<double> success;    // fraction with IoU > tau (IoU = 1 always counts)
    double precision_at_20 = 0.0;
    double success_at_50 = 0.0;
    double auc = 0.0;
    double mean_iou = 0.0;
    double mean_center_error = 0.0;
    std::size_t frames = 0;
    bool operator==(const Curves&) const = default;
};

Curves curves(std::span<const BoundingBox> pred, std::span<const BoundingBox> gt);

/// Pointwise weighted mean of curve sets; `weights` empty means equal weights.
Curves average_curves(std::span<const Curves> parts, std::span<const double> weights = {});

enum class Protocol { ope, sre, tre };
std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& name);

/// Boxes for frames start .. size-1 of `seq`, the first being `init`.
using TrackFn = std::function<std::vector<BoundingBox>(const Sequence& seq, std::size_t start, const BoundingBox& init)>;

TrackFn model_tracker(const EmbedNet& net, const TrackerConfig& cfg = {});
/// Reports the initial box on every frame.
TrackFn static_tracker();
/// Reports the ground truth; used to check protocol plumbing.
TrackFn oracle_tracker();

/// The 12 SRE initializations: 8 shifts by 10% of the box size (axis and
/// diagonal directions) and 4 rescalings about the center, clamped into the frame.
std::vector<BoundingBox> sre_boxes(const BoundingBox& init, double frame_w, double frame_h);
/// TRE start frames: floor(k n / 20) for k = 0..19, duplicates dropped.
std::vector<std::size_t> tre_starts(std::size_t frames);

struct SequenceResult {
    std::string name;
    std::size_t runs = 0;
    Curves curves;
};

struct EvalResult {
    Protocol protocol = Protocol::ope;
    std::vector<SequenceResult> sequences;
    Curves aggregate;        // mean of per-sequence curves
    std::size_t tracked_frames = 0;  // frames passed through the tracker, excluding initializations
    double seconds = 0.0;    // wall clock spent tracking
    double fps() const { return seconds > 0.0 ? static_cast<double>(tracked_frames) / seconds : 0.0; }
};

/// Runs `protocol` over every sequence. Sequences run on up to `threads`
/// workers; results are gathered in input order.
EvalResult run_protocol(Protocol protocol, const TrackFn& tracker, const std::vector<Sequence>& sequences,
                        std::size_t threads = 1);
EvalResult run_ope(const TrackFn& tracker, const std::vector<Sequence>& sequences, std::size_t threads = 1);
EvalResult run_sre(const TrackFn& tracker, const std::vector<Sequence>& sequences, std::size_t threads = 1);
EvalResult run_tre(const TrackFn& tracker, const std::vector<Sequence>& sequences, std::size_t threads = 1);

/// OPE scoring of stored predictions; `predictions[i]` belongs to `sequences[i]`.
EvalResult score_predictions(const std::vector<Sequence>& sequences,
                             const std::vector<std::vector<BoundingBox>>& predictions);

}  // namespace quadtrack
