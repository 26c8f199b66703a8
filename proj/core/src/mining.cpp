#include "quadtrack/mining.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace quadtrack {

LabelMap build_label_map(std::size_t map_size, double radius) {
    if (map_size == 0 || map_size % 2 == 0) {
        throw ShapeError("label map size must be odd, got " + std::to_string(map_size));
    }
    if (!(radius > 0.0) || !(radius < static_cast<double>(map_size) / 2.0)) {
        throw ShapeError("label radius " + std::to_string(radius) + " outside (0, " + std::to_string(map_size) +
                         "/2)");
    }
    const auto center = static_cast<long>(map_size / 2);
    LabelMap labels(map_size, map_size, -1);
    for (std::size_t r = 0; r < map_size; ++r) {
        for (std::size_t c = 0; c < map_size; ++c) {
            const double dy = static_cast<double>(static_cast<long>(r) - center);
            const double dx = static_cast<double>(static_cast<long>(c) - center);
            if (dx * dx + dy * dy <= radius * radius) labels(r, c) = 1;
        }
    }
    return labels;
}

std::size_t count_label(const LabelMap& labels, std::int8_t label) {
    std::size_t n = 0;
    for (auto v : labels.span()) n += v == label ? 1 : 0;
    return n;
}

WeightMap init_balance_weights(const LabelMap& labels) {
    const std::size_t pos = count_label(labels, 1);
    const std::size_t neg = count_label(labels, -1);
    if (pos == 0 || neg == 0 || pos + neg != labels.size()) {
        throw ShapeError("balance weights need both +1 and -1 labels and nothing else");
    }
    WeightMap w(labels.rows(), labels.cols());
    const double wp = 1.0 / (2.0 * static_cast<double>(pos));
    const double wn = 1.0 / (2.0 * static_cast<double>(neg));
    for (std::size_t i = 0; i < labels.size(); ++i) w[i] = labels[i] > 0 ? wp : wn;
    return w;
}

WeightMap uniform_weights(const LabelMap& labels) {
    if (labels.size() == 0) throw ShapeError("uniform weights of an empty map");
    return WeightMap(labels.rows(), labels.cols(), 1.0 / static_cast<double>(labels.size()));
}

WeightMap adapt_weights(const Grid64& scores, const LabelMap& labels, const WeightMap& weights) {
    if (!scores.same_shape(labels) || !scores.same_shape(weights)) {
        throw ShapeError("adapt_weights: score, label and weight maps differ in shape");
    }
    double min_positive = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] > 0) min_positive = std::min(min_positive, scores[i]);
    }
    WeightMap out = weights;
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] < 0 && scores[i] > min_positive) out[i] *= 2.0;
        total += out[i];
    }
    for (auto& w : out.span()) w /= total;
    return out;
}

HardPair select_hard_pair(const Grid64& scores, const LabelMap& labels, MiningMode mode) {
    if (!scores.same_shape(labels)) throw ShapeError("select_hard_pair: score and label maps differ in shape");
    std::size_t pos = scores.size();
    std::size_t neg = scores.size();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] > 0) {
            if (pos == scores.size() || scores[i] < scores[pos]) pos = i;
        } else if (neg == scores.size() || scores[i] > scores[neg]) {
            neg = i;
        }
    }
    if (pos == scores.size() || neg == scores.size()) {
        throw ShapeError("select_hard_pair: label map needs both classes");
    }
    const std::size_t cols = scores.cols();
    HardPair p{{pos / cols, pos % cols}, {neg / cols, neg % cols}};
    if (mode == MiningMode::tracking) p.positive = {scores.rows() / 2, cols / 2};
    return p;
}

MiningResult mine(const Grid64& scores, const LabelMap& labels, const WeightMap& initial_weights, MiningMode mode,
                  bool adapt) {
    const HardPair p = select_hard_pair(scores, labels, mode);
    return {p.positive, p.negative, adapt ? adapt_weights(scores, labels, initial_weights) : initial_weights};
}

}  // namespace quadtrack
