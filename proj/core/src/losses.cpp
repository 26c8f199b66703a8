#include "quadtrack/losses.hpp"

#include <cmath>
#include <string>

namespace quadtrack {

PairLoss pair_loss(const Grid64& scores, const LabelMap& labels, const WeightMap& weights) {
    if (!scores.same_shape(labels) || !scores.same_shape(weights)) {
        throw ShapeError("pair_loss: score, label and weight maps differ in shape");
    }
    double total = 0.0;
    for (double w : weights.span()) total += w;
    if (std::abs(total - 1.0) > 1e-9) {
        throw ShapeError("pair_loss: weights sum to " + std::to_string(total) + ", expected 1");
    }
    PairLoss r{0.0, Grid64(scores.rows(), scores.cols())};
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double y = labels[i];
        if (y != 1.0 && y != -1.0) throw ShapeError("pair_loss: labels must be +1 or -1");
        const double t = y * scores[i];
        r.loss += weights[i] * (std::log1p(std::exp(-std::abs(t))) + std::max(0.0, -t));
        // sigma(-t), evaluated on the side that does not overflow.
        const double sig = t >= 0.0 ? std::exp(-t) / (1.0 + std::exp(-t)) : 1.0 / (1.0 + std::exp(t));
        r.grad[i] = -weights[i] * y * sig;
    }
    return r;
}

TripletLoss triplet_loss(double f_plus, double f_minus) {
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw NumericalError("triplet_loss: non-finite score input");
    }
    const double m = std::max(f_plus, f_minus);
    const double e_plus = std::exp(f_plus - m);
    const double e_minus = std::exp(f_minus - m);
    TripletLoss r;
    // The larger probability is divided out; the other is its exact complement.
    if (f_plus >= f_minus) {
        r.s_plus = e_plus / (e_plus + e_minus);
        r.s_minus = 1.0 - r.s_plus;
    } else {
        r.s_minus = e_minus / (e_plus + e_minus);
        r.s_plus = 1.0 - r.s_minus;
    }
    const double a = r.s_plus - 1.0;
    r.loss = a * a + r.s_minus * r.s_minus;
    const double g = 4.0 * r.s_plus * r.s_minus * r.s_minus;
    r.d_plus = -g;
    r.d_minus = g;
    return r;
}

CombinedLoss combine_loss(double pair_loss, double triplet_loss, const LossWeights& weights) {
    if (!(weights.pair >= weights.threshold) || !(weights.triplet >= weights.threshold) || !(weights.threshold > 0)) {
        throw ShapeError("combine_loss: weights (" + std::to_string(weights.pair) + ", " +
                         std::to_string(weights.triplet) + ") below threshold " + std::to_string(weights.threshold));
    }
    const double ws = weights.pair + weights.triplet;
    const double weighted = weights.pair * pair_loss + weights.triplet * triplet_loss;
    CombinedLoss r;
    r.loss = weighted / ws;
    if (weights.pair >= weights.triplet) {
        r.d_pair_loss = weights.pair / ws;
        r.d_triplet_loss = 1.0 - r.d_pair_loss;
    } else {
        r.d_triplet_loss = weights.triplet / ws;
        r.d_pair_loss = 1.0 - r.d_triplet_loss;
    }
    r.d_pair_weight = (ws * pair_loss - weighted) / (ws * ws);
    r.d_triplet_weight = (ws * triplet_loss - weighted) / (ws * ws);
    return r;
}

LossWeights clamp_weights(LossWeights weights) {
    weights.pair = std::max(weights.threshold, weights.pair);
    weights.triplet = std::max(weights.threshold, weights.triplet);
    return weights;
}

}  // namespace quadtrack
