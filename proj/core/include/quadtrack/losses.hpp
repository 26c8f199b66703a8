#pragma once

// Loss layers of the quadruplet objective. All arithmetic is done in double:
// the triplet gradient carries a cubic factor in s_minus that underflows in
// single precision long before the loss itself is negligible.

#include <cstdint>

#include "quadtrack/tensor.hpp"

namespace quadtrack {

/// +1 for cells in the positive area, -1 elsewhere.
using LabelMap = BasicGrid<std::int8_t>;
/// Non-negative per-cell pair weights summing to one.
using WeightMap = Grid64;

struct PairLoss {
    double loss = 0.0;
    Grid64 grad;  // dL1/dv
};

/// Weighted logistic loss sum_u w[u] log(1 + exp(-y[u] v[u])), evaluated as
/// log1p(exp(-|t|)) + max(0, -t) so that |v| in the thousands stays finite.
PairLoss pair_loss(const Grid64& scores, const LabelMap& labels, const WeightMap& weights);

struct TripletLoss {
    double s_plus = 0.0;
    double s_minus = 0.0;
    double loss = 0.0;
    double d_plus = 0.0;   // dL2/df_plus
    double d_minus = 0.0;  // dL2/df_minus
};

/// Squared distance of the two-way softmax of (f_plus, f_minus) from (1, 0).
/// Exponentials are shifted by max(f_plus, f_minus).
TripletLoss triplet_loss(double f_plus, double f_minus);

inline constexpr double kDefaultWeightThreshold = 0.01;

/// Learnable combination weights of the pair and triplet terms.
struct LossWeights {
    double pair = 0.9;
    double triplet = 0.1;
    double threshold = kDefaultWeightThreshold;
    bool operator==(const LossWeights&) const = default;
};

struct CombinedLoss {
    double loss = 0.0;
    double d_pair_loss = 0.0;     // dL/dL1
    double d_triplet_loss = 0.0;  // dL/dL2
    double d_pair_weight = 0.0;   // dL/dw1
    double d_triplet_weight = 0.0;
};

/// L = (w1 L1 + w2 L2) / (w1 + w2). Weights below the threshold are rejected;
/// call clamp_weights() after each update.
CombinedLoss combine_loss(double pair_loss, double triplet_loss, const LossWeights& weights);

LossWeights clamp_weights(LossWeights weights);

}  // namespace quadtrack
