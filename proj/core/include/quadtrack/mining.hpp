#pragma once

#include "quadtrack/losses.hpp"
#include "quadtrack/tensor.hpp"

namespace quadtrack {

inline constexpr double kLabelRadius = 2.0;

/// Square label map: +1 within Euclidean distance `radius` (in cells) of the
/// center cell, -1 elsewhere. `map_size` must be odd.
LabelMap build_label_map(std::size_t map_size, double radius = kLabelRadius);

std::size_t count_label(const LabelMap& labels, std::int8_t label);

/// Each class gets half of the total mass, spread uniformly over its cells.
WeightMap init_balance_weights(const LabelMap& labels);

/// Uniform 1/|D| weights (plain logistic loss averaged over the map).
WeightMap uniform_weights(const LabelMap& labels);

/// Doubles the weight of every negative cell scoring strictly above the
/// lowest positive score, then renormalizes to unit sum.
WeightMap adapt_weights(const Grid64& scores, const LabelMap& labels, const WeightMap& weights);

enum class MiningMode {
    general,   // lowest-scoring positive, highest-scoring negative
    tracking,  // center cell, highest-scoring negative
};

struct HardPair {
    Cell positive;
    Cell negative;
};

/// Ties go to the first cell in row-major order.
HardPair select_hard_pair(const Grid64& scores, const LabelMap& labels, MiningMode mode);

struct MiningResult {
    Cell positive;
    Cell negative;
    WeightMap weights;
};

/// The precompute phase of one training iteration: hard pair plus pair
/// weights (optionally adapted to the current scores).
MiningResult mine(const Grid64& scores, const LabelMap& labels, const WeightMap& initial_weights,
                  MiningMode mode, bool adapt);

}  // namespace quadtrack
