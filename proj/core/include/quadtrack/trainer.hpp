#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quadtrack/data_io.hpp"
#include "quadtrack/embed_net.hpp"
#include "quadtrack/kv_config.hpp"
#include "quadtrack/losses.hpp"
#include "quadtrack/mining.hpp"
#include "quadtrack/random.hpp"

namespace quadtrack {

/// Training objectives, from plain Siamese pairs to the learned-weight
/// quadruplet loss.
enum class TrainMode {
    pair_only,      // L = L1, fixed initial weights
    adaptive_pair,  // L = L1 with violation-doubled weights
    quad_const,     // L = combine(L1, L2) with fixed (0.9, 0.1)
    quad_learned,   // as quad_const, combination weights trained by SGD
};

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);
inline constexpr TrainMode kAllModes[] = {TrainMode::pair_only, TrainMode::adaptive_pair, TrainMode::quad_const,
                                          TrainMode::quad_learned};

enum class PairWeighting { balanced, uniform };

struct TrainConfig {
    std::size_t epochs = 2;
    std::size_t pairs_per_epoch = 2000;
    std::size_t batch_size = 8;
    double lr_start = 1e-3;
    double lr_end = 1e-5;
    double momentum = 0.9;
    double weight_decay = 0.0;
    LossWeights initial_weights{};
    double grayscale_prob = 0.25;
    double validation_fraction = 0.1;
    TrainMode mode = TrainMode::quad_learned;
    PairWeighting pair_weighting = PairWeighting::balanced;
    double label_radius = kLabelRadius;
    std::size_t max_frame_gap = 10;
    std::string architecture = "desk";  // desk | reference
    std::uint64_t seed = 1;

    static TrainConfig from_config(const KeyValueConfig& cfg);
    void validate() const;
    /// Geometric decay: lr_start at epoch 0, lr_end at the last epoch.
    double learning_rate(std::size_t epoch) const;
    std::vector<LayerSpec> layers() const;
    bool uses_triplet() const { return mode == TrainMode::quad_const || mode == TrainMode::quad_learned; }
    bool adapts_weights() const { return mode != TrainMode::pair_only; }
};

/// Exemplar (127x127) and search (255x255) crops; the target center is given
/// in search-image pixel coordinates.
struct TrainingPair {
    Tensor exemplar;
    Tensor search;
    double target_x = 127.0;
    double target_y = 127.0;
};

/// Crops frame `exemplar_frame` around its box and frame `search_frame`
/// around its box, with the same context convention as the tracker.
TrainingPair make_pair(const Sequence& seq, std::size_t exemplar_frame, std::size_t search_frame, bool grayscale);

/// Random sequence, random frame and a second frame at most max_frame_gap
/// away. Sequences with fewer than two frames are skipped.
TrainingPair sample_pair(const std::vector<Sequence>& data, Rng& rng, const TrainConfig& cfg);

/// Loss of one pair and, optionally, its gradient. When `fixed` is given the
/// precompute phase is skipped and that hard pair / weight map is used.
template <typename T>
struct PairObjective {
    double loss = 0.0;
    double pair_loss = 0.0;
    double triplet_loss = 0.0;
    MiningResult mining;
    ParamSet<T> grad;
    double d_pair_weight = 0.0;
    double d_triplet_weight = 0.0;
};

template <typename T>
PairObjective<T> evaluate_pair(const BasicEmbedNet<T>& net, const LossWeights& weights,
                               const BasicTensor<T>& exemplar, const BasicTensor<T>& search, const TrainConfig& cfg,
                               bool with_grad, const MiningResult* fixed = nullptr);

/// Momentum buffers for the network parameters and the two loss weights.
struct SgdState {
    ParamSet<float> velocity;
    double pair_weight_velocity = 0.0;
    double triplet_weight_velocity = 0.0;
};

struct StepResult {
    double loss = 0.0;
    double pair_loss = 0.0;
    double triplet_loss = 0.0;
    LossWeights weights;
};

/// One SGD update from the averaged gradient of `batch`. Throws
/// NumericalError (leaving net and weights untouched) on non-finite values.
StepResult train_step(EmbedNet& net, LossWeights& weights, SgdState& sgd, std::span<const TrainingPair> batch,
                      const TrainConfig& cfg, double learning_rate);

/// Center distance, in search pixels, between the upsampled score peak and the target.
double pair_distance(const EmbedNet& net, const TrainingPair& pair, std::size_t upsample_factor = 16);
double validate(const EmbedNet& net, std::span<const TrainingPair> pairs);

struct EpochRecord {
    std::size_t epoch = 0;
    double learning_rate = 0.0;
    std::size_t steps = 0;
    double mean_loss = 0.0;
    double mean_pair_loss = 0.0;
    double mean_triplet_loss = 0.0;
    double validation_error = 0.0;
    LossWeights weights;          // at the end of the epoch
    double min_pair_weight = 0.0;  // over every update in the epoch
    double min_triplet_weight = 0.0;
};

struct TrainReport {
    TrainMode mode = TrainMode::quad_learned;
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    LossWeights final_weights;
    std::vector<LossWeights> weight_trajectory;  // after every update
    double wall_clock_seconds = 0.0;
};

struct TrainResult {
    EmbedNet net;          // snapshot with the lowest validation error
    LossWeights weights;   // weights at that snapshot
    TrainReport report;
};

TrainResult train(const std::vector<Sequence>& data, const TrainConfig& cfg);

/// JSON text: per-epoch records plus a summary block. Wall-clock time is
/// only included on request so that reports of seeded runs compare equal.
std::string format_train_report(const TrainReport& report, bool include_timing = false);

}  // namespace quadtrack
