#include "quadtrack/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include "quadtrack/error.hpp"
#include "quadtrack/log.hpp"

namespace quadtrack {

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
    const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double center_error(const BoundingBox& a, const BoundingBox& b) { return std::hypot(a.cx() - b.cx(), a.cy() - b.cy()); }

double precision_threshold(std::size_t i) { return static_cast<double>(i); }
double success_threshold(std::size_t i) { return static_cast<double>(i) / 20.0; }

Curves curves(std::span<const BoundingBox> pred, std::span<const BoundingBox> gt) {
    if (pred.size() != gt.size()) {
        throw ShapeError("curves: " + std::to_string(pred.size()) + " predictions for " + std::to_string(gt.size()) +
                         " ground-truth boxes");
    }
    if (gt.empty()) throw ShapeError("curves: no frames");
    Curves c;
    c.frames = gt.size();
    std::vector<std::size_t> within(kPrecisionThresholds, 0);
    std::vector<std::size_t> above(kSuccessThresholds, 0);
    double iou_sum = 0.0;
    double err_sum = 0.0;
    for (std::size_t f = 0; f < gt.size(); ++f) {
        const double e = center_error(pred[f], gt[f]);
        const double o = iou(pred[f], gt[f]);
        iou_sum += o;
        err_sum += e;
        for (std::size_t i = 0; i < kPrecisionThresholds; ++i) within[i] += e <= precision_threshold(i) ? 1 : 0;
        // An exact overlap also counts at tau = 1, so a perfect tracker scores AUC 1.
        for (std::size_t i = 0; i < kSuccessThresholds; ++i) above[i] += o > success_threshold(i) || o == 1.0 ? 1 : 0;
    }
    const auto n = static_cast<double>(gt.size());
    for (std::size_t k : within) c.precision.push_back(static_cast<double>(k) / n);
    for (std::size_t k : above) c.success.push_back(static_cast<double>(k) / n);
    c.precision_at_20 = c.precision[20];
    c.success_at_50 = c.success[10];
    double s = 0.0;
    for (double v : c.success) s += v;
    c.auc = s / static_cast<double>(kSuccessThresholds);
    c.mean_iou = iou_sum / n;
    c.mean_center_error = err_sum / n;
    return c;
}

namespace {

// Weighted mean written as base + sum w (x - base) / sum w, so that averaging
// identical values returns them unchanged.
double weighted_mean(std::span<const Curves> parts, std::span<const double> w, double total,
                     double (*get)(const Curves&)) {
    const double base = get(parts[0]);
    double acc = 0.0;
    for (std::size_t i = 0; i < parts.size(); ++i) acc += w[i] * (get(parts[i]) - base);
    return base + acc / total;
}

}  // namespace

Curves average_curves(std::span<const Curves> parts, std::span<const double> weights) {
    if (parts.empty()) throw ShapeError("average_curves: nothing to average");
    std::vector<double> w(weights.begin(), weights.end());
    if (w.empty()) w.assign(parts.size(), 1.0);
    if (w.size() != parts.size()) throw ShapeError("average_curves: weight count mismatch");
    double total = 0.0;
    for (double v : w) total += v;
    if (!(total > 0.0)) throw ShapeError("average_curves: weights must have a positive sum");

    Curves out;
    out.precision.resize(kPrecisionThresholds);
    out.success.resize(kSuccessThresholds);
    for (std::size_t t = 0; t < kPrecisionThresholds; ++t) {
        const double base = parts[0].precision[t];
        double acc = 0.0;
        for (std::size_t i = 0; i < parts.size(); ++i) acc += w[i] * (parts[i].precision[t] - base);
        out.precision[t] = base + acc / total;
    }
    for (std::size_t t = 0; t < kSuccessThresholds; ++t) {
        const double base = parts[0].success[t];
        double acc = 0.0;
        for (std::size_t i = 0; i < parts.size(); ++i) acc += w[i] * (parts[i].success[t] - base);
        out.success[t] = base + acc / total;
    }
    out.precision_at_20 = weighted_mean(parts, w, total, [](const Curves& c) { return c.precision_at_20; });
    out.success_at_50 = weighted_mean(parts, w, total, [](const Curves& c) { return c.success_at_50; });
    out.auc = weighted_mean(parts, w, total, [](const Curves& c) { return c.auc; });
    out.mean_iou = weighted_mean(parts, w, total, [](const Curves& c) { return c.mean_iou; });
    out.mean_center_error = weighted_mean(parts, w, total, [](const Curves& c) { return c.mean_center_error; });
    for (const auto& p : parts) out.frames += p.frames;
    return out;
}

std::string to_string(Protocol p) {
    switch (p) {
        case Protocol::ope: return "ope";
        case Protocol::sre: return "sre";
        case Protocol::tre: return "tre";
    }
    return "unknown";
}

Protocol parse_protocol(const std::string& name) {
    if (name == "ope") return Protocol::ope;
    if (name == "sre") return Protocol::sre;
    if (name == "tre") return Protocol::tre;
    throw ShapeError("unknown protocol '" + name + "' (expected ope, sre or tre)");
}

TrackFn model_tracker(const EmbedNet& net, const TrackerConfig& cfg) {
    return [&net, cfg](const Sequence& seq, std::size_t start, const BoundingBox& init) {
        return track_frames(
            net, seq.size() - start, [&](std::size_t i) { return seq.frame(start + i); }, init, cfg);
    };
}

TrackFn static_tracker() {
    return [](const Sequence& seq, std::size_t start, const BoundingBox& init) {
        return std::vector<BoundingBox>(seq.size() - start, init);
    };
}

TrackFn oracle_tracker() {
    return [](const Sequence& seq, std::size_t start, const BoundingBox&) {
        return std::vector<BoundingBox>(seq.boxes.begin() + static_cast<std::ptrdiff_t>(start), seq.boxes.end());
    };
}

std::vector<BoundingBox> sre_boxes(const BoundingBox& init, double frame_w, double frame_h) {
    const double dx = 0.1 * init.w;
    const double dy = 0.1 * init.h;
    std::vector<BoundingBox> out;
    const int shifts[8][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {1, -1}, {-1, 1}, {1, 1}};
    for (const auto& s : shifts) out.push_back({init.x + s[0] * dx, init.y + s[1] * dy, init.w, init.h});
    for (double f : {0.8, 0.9, 1.1, 1.2}) out.push_back(BoundingBox::from_center(init.cx(), init.cy(), init.w * f, init.h * f));
    for (auto& b : out) {
        b.w = std::min(b.w, frame_w);
        b.h = std::min(b.h, frame_h);
        b.x = std::clamp(b.x, 0.0, frame_w - b.w);
        b.y = std::clamp(b.y, 0.0, frame_h - b.h);
    }
    return out;
}

std::vector<std::size_t> tre_starts(std::size_t frames) {
    std::vector<std::size_t> starts;
    for (std::size_t k = 0; k < 20; ++k) {
        const std::size_t s = k * frames / 20;
        if (s < frames && (starts.empty() || starts.back() != s)) starts.push_back(s);
    }
    return starts;
}

namespace {

struct RunTiming {
    std::size_t frames = 0;
    double seconds = 0.0;
};

std::vector<BoundingBox> timed_run(const TrackFn& tracker, const Sequence& seq, std::size_t start,
                                   const BoundingBox& init, RunTiming& timing) {
    const auto t0 = std::chrono::steady_clock::now();
    auto boxes = tracker(seq, start, init);
    timing.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (boxes.size() != seq.size() - start) {
        throw ShapeError("tracker returned " + std::to_string(boxes.size()) + " boxes for " +
                         std::to_string(seq.size() - start) + " frames");
    }
    timing.frames += boxes.size() - 1;
    return boxes;
}

std::span<const BoundingBox> tail(const Sequence& seq, std::size_t start) {
    return std::span<const BoundingBox>(seq.boxes).subspan(start);
}

SequenceResult evaluate_sequence(Protocol protocol, const TrackFn& tracker, const Sequence& seq, RunTiming& timing) {
    if (seq.size() == 0) throw DataError("sequence " + seq.name + " has no frames");
    SequenceResult r;
    r.name = seq.name;
    std::vector<Curves> parts;
    std::vector<double> weights;
    switch (protocol) {
        case Protocol::ope: {
            parts.push_back(curves(timed_run(tracker, seq, 0, seq.boxes[0], timing), seq.boxes));
            break;
        }
        case Protocol::sre: {
            const Shape s = seq.frame(0).shape();
            for (const auto& init : sre_boxes(seq.boxes[0], static_cast<double>(s.w), static_cast<double>(s.h))) {
                parts.push_back(curves(timed_run(tracker, seq, 0, init, timing), seq.boxes));
            }
            break;
        }
        case Protocol::tre: {
            for (std::size_t start : tre_starts(seq.size())) {
                parts.push_back(curves(timed_run(tracker, seq, start, seq.boxes[start], timing), tail(seq, start)));
                weights.push_back(static_cast<double>(seq.size() - start));
            }
            break;
        }
    }
    r.runs = parts.size();
    r.curves = average_curves(parts, weights);
    log::debug("{} {}: {} runs, precision@20 {:.3f}, AUC {:.3f}", to_string(protocol), seq.name, r.runs,
               r.curves.precision_at_20, r.curves.auc);
    return r;
}

}  // namespace

EvalResult run_protocol(Protocol protocol, const TrackFn& tracker, const std::vector<Sequence>& sequences,
                        std::size_t threads) {
    if (sequences.empty()) throw DataError("evaluation needs at least one sequence");
    const std::size_t n = sequences.size();
    std::vector<SequenceResult> results(n);
    std::vector<RunTiming> timings(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                results[i] = evaluate_sequence(protocol, tracker, sequences[i], timings[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, n);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    EvalResult out;
    out.protocol = protocol;
    std::vector<Curves> per_seq;
    for (std::size_t i = 0; i < n; ++i) {
        per_seq.push_back(results[i].curves);
        out.tracked_frames += timings[i].frames;
        out.seconds += timings[i].seconds;
    }
    out.sequences = std::move(results);
    out.aggregate = average_curves(per_seq);
    return out;
}

EvalResult run_ope(const TrackFn& tracker, const std::vector<Sequence>& sequences, std::size_t threads) {
    return run_protocol(Protocol::ope, tracker, sequences, threads);
}

EvalResult run_sre(const TrackFn& tracker, const std::vector<Sequence>& sequences, std::size_t threads) {
    return run_protocol(Protocol::sre, tracker, sequences, threads);
}

EvalResult run_tre(const TrackFn& tracker, const std::vector<Sequence>& sequences, std::size_t threads) {
    return run_protocol(Protocol::tre, tracker, sequences, threads);
}

EvalResult score_predictions(const std::vector<Sequence>& sequences,
                             const std::vector<std::vector<BoundingBox>>& predictions) {
    if (sequences.empty()) throw DataError("evaluation needs at least one sequence");
    if (sequences.size() != predictions.size()) throw DataError("prediction sets do not match the sequences");
    EvalResult out;
    std::vector<Curves> per_seq;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        const Sequence& seq = sequences[i];
        if (predictions[i].size() != seq.size()) {
            throw DataError("sequence " + seq.name + ": " + std::to_string(predictions[i].size()) +
                            " predicted boxes for " + std::to_string(seq.size()) + " frames");
        }
        SequenceResult r{seq.name, 1, curves(predictions[i], seq.boxes)};
        per_seq.push_back(r.curves);
        out.sequences.push_back(std::move(r));
    }
    out.aggregate = average_curves(per_seq);
    return out;
}

}  // namespace quadtrack
