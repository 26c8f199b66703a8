#include "quadtrack/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "quadtrack/geometry.hpp"
#include "quadtrack/log.hpp"
#include "quadtrack/tensor_ops.hpp"
#include "quadtrack/tracker.hpp"
#include "quadtrack/xcorr_head.hpp"

namespace quadtrack {

std::string_view to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::pair_only: return "pair_only";
        case TrainMode::adaptive_pair: return "adaptive_pair";
        case TrainMode::quad_const: return "quad_const";
        case TrainMode::quad_learned: return "quad_learned";
    }
    return "unknown";
}

TrainMode parse_train_mode(std::string_view name) {
    for (TrainMode m : kAllModes) {
        if (to_string(m) == name) return m;
    }
    throw ShapeError("unknown training mode '" + std::string(name) + "'");
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
    cfg.reject_unknown({"epochs", "pairs_per_epoch", "batch_size", "lr_start", "lr_end", "momentum", "weight_decay",
                        "initial_pair_weight", "initial_triplet_weight", "weight_threshold", "grayscale_prob",
                        "validation_fraction", "mode", "pair_weighting", "label_radius", "max_frame_gap",
                        "architecture", "seed"});
    TrainConfig c;
    auto count = [&](const char* key, std::size_t fallback) {
        const long long v = cfg.get_int(key, static_cast<long long>(fallback));
        if (v < 0) throw DataError(std::string("config key ") + key + " must be non-negative");
        return static_cast<std::size_t>(v);
    };
    c.epochs = count("epochs", c.epochs);
    c.pairs_per_epoch = count("pairs_per_epoch", c.pairs_per_epoch);
    c.batch_size = count("batch_size", c.batch_size);
    c.lr_start = cfg.get_double("lr_start", c.lr_start);
    c.lr_end = cfg.get_double("lr_end", c.lr_end);
    c.momentum = cfg.get_double("momentum", c.momentum);
    c.weight_decay = cfg.get_double("weight_decay", c.weight_decay);
    c.initial_weights.pair = cfg.get_double("initial_pair_weight", c.initial_weights.pair);
    c.initial_weights.triplet = cfg.get_double("initial_triplet_weight", c.initial_weights.triplet);
    c.initial_weights.threshold = cfg.get_double("weight_threshold", c.initial_weights.threshold);
    c.grayscale_prob = cfg.get_double("grayscale_prob", c.grayscale_prob);
    c.validation_fraction = cfg.get_double("validation_fraction", c.validation_fraction);
    c.mode = parse_train_mode(cfg.get_string("mode", std::string(to_string(c.mode))));
    const std::string weighting = cfg.get_string("pair_weighting", "balanced");
    if (weighting == "balanced") {
        c.pair_weighting = PairWeighting::balanced;
    } else if (weighting == "uniform") {
        c.pair_weighting = PairWeighting::uniform;
    } else {
        throw DataError("config key pair_weighting must be balanced or uniform");
    }
    c.label_radius = cfg.get_double("label_radius", c.label_radius);
    c.max_frame_gap = count("max_frame_gap", c.max_frame_gap);
    c.architecture = cfg.get_string("architecture", c.architecture);
    c.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(c.seed)));
    c.validate();
    return c;
}

void TrainConfig::validate() const {
    if (epochs == 0 || pairs_per_epoch < 2 || batch_size == 0) {
        throw ShapeError("train config: epochs, batch_size must be positive and pairs_per_epoch >= 2");
    }
    if (!(lr_start >= lr_end) || !(lr_end > 0.0)) throw ShapeError("train config: need lr_start >= lr_end > 0");
    if (!(momentum >= 0.0 && momentum < 1.0) || weight_decay < 0.0) {
        throw ShapeError("train config: momentum must be in [0, 1), weight_decay >= 0");
    }
    if (!(grayscale_prob >= 0.0 && grayscale_prob <= 1.0)) throw ShapeError("train config: grayscale_prob in [0, 1]");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw ShapeError("train config: validation_fraction in (0, 1)");
    }
    if (!(initial_weights.threshold > 0.0)) throw ShapeError("train config: weight threshold must be positive");
    if (architecture != "desk" && architecture != "reference") {
        throw ShapeError("train config: architecture must be desk or reference");
    }
}

double TrainConfig::learning_rate(std::size_t epoch) const {
    if (epochs <= 1) return lr_start;
    const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return lr_start * std::pow(lr_end / lr_start, t);
}

std::vector<LayerSpec> TrainConfig::layers() const {
    return architecture == "reference" ? reference_architecture() : desk_architecture();
}

TrainingPair make_pair(const Sequence& seq, std::size_t exemplar_frame, std::size_t search_frame, bool grayscale) {
    const Tensor zf = seq.frame(exemplar_frame);
    const Tensor xf = seq.frame(search_frame);
    const BoundingBox& zb = seq.boxes.at(exemplar_frame);
    const BoundingBox& xb = seq.boxes.at(search_frame);
    const double search_side =
        context_side(xb.w, xb.h) * static_cast<double>(kSearchSize) / static_cast<double>(kExemplarSize);
    TrainingPair p;
    p.exemplar = crop_resize(zf, zb.cx(), zb.cy(), context_side(zb.w, zb.h), kExemplarSize, channel_mean(zf));
    p.search = crop_resize(xf, xb.cx(), xb.cy(), search_side, kSearchSize, channel_mean(xf));
    if (grayscale) {
        p.exemplar = to_grayscale(p.exemplar);
        p.search = to_grayscale(p.search);
    }
    p.target_x = static_cast<double>(kSearchSize / 2);
    p.target_y = static_cast<double>(kSearchSize / 2);
    return p;
}

TrainingPair sample_pair(const std::vector<Sequence>& data, Rng& rng, const TrainConfig& cfg) {
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].size() >= 2) usable.push_back(i);
    }
    if (usable.empty()) throw DataError("no sequence with at least two frames");
    const Sequence& seq = data[usable[uniform_index(rng, usable.size())]];
    const std::size_t n = seq.size();
    const std::size_t a = uniform_index(rng, n);
    const std::size_t gap = std::max<std::size_t>(1, cfg.max_frame_gap);
    const std::size_t lo = a >= gap ? a - gap : 0;
    const std::size_t hi = std::min(n - 1, a + gap);
    // Draw from [lo, hi] without `a`.
    std::size_t b = lo + uniform_index(rng, hi - lo);
    if (b >= a) ++b;
    const bool gray = uniform(rng, 0.0, 1.0) < cfg.grayscale_prob;
    return make_pair(seq, a, b, gray);
}

template <typename T>
PairObjective<T> evaluate_pair(const BasicEmbedNet<T>& net, const LossWeights& weights,
                               const BasicTensor<T>& exemplar, const BasicTensor<T>& search, const TrainConfig& cfg,
                               bool with_grad, const MiningResult* fixed) {
    auto fz = forward(net, exemplar);
    auto fx = forward(net, search);
    const auto sm = score_map(net, fz.feature, fx.feature);
    const Grid64 v = sm.values.template cast<double>();
    if (v.rows() != v.cols()) throw ShapeError("training expects a square score map");
    const LabelMap labels = build_label_map(v.rows(), cfg.label_radius);

    PairObjective<T> r;
    if (fixed) {
        r.mining = *fixed;
    } else {
        const WeightMap w0 =
            cfg.pair_weighting == PairWeighting::balanced ? init_balance_weights(labels) : uniform_weights(labels);
        r.mining = mine(v, labels, w0, MiningMode::tracking, cfg.adapts_weights());
    }
    const PairLoss pl = pair_loss(v, labels, r.mining.weights);
    r.pair_loss = pl.loss;
    Grid64 upstream = pl.grad;
    if (cfg.uses_triplet()) {
        const Cell& pos = r.mining.positive;
        const Cell& neg = r.mining.negative;
        const TripletLoss tl = triplet_loss(v(pos.row, pos.col), v(neg.row, neg.col));
        const CombinedLoss c = combine_loss(pl.loss, tl.loss, weights);
        r.triplet_loss = tl.loss;
        r.loss = c.loss;
        r.d_pair_weight = c.d_pair_weight;
        r.d_triplet_weight = c.d_triplet_weight;
        for (auto& g : upstream.span()) g *= c.d_pair_loss;
        // The triplet term reaches only the two selected cells.
        upstream(pos.row, pos.col) += c.d_triplet_loss * tl.d_plus;
        upstream(neg.row, neg.col) += c.d_triplet_loss * tl.d_minus;
    } else {
        r.loss = pl.loss;
    }
    if (with_grad) {
        const auto g = score_map_grad(upstream.template cast<T>(), fz.feature, fx.feature);
        r.grad = backward(net, fz.cache, g.exemplar);
        r.grad += backward(net, fx.cache, g.search);
        r.grad.score_bias = g.bias;
    }
    return r;
}

template PairObjective<float> evaluate_pair(const EmbedNet&, const LossWeights&, const Tensor&, const Tensor&,
                                            const TrainConfig&, bool, const MiningResult*);
template PairObjective<double> evaluate_pair(const EmbedNet64&, const LossWeights&, const Tensor64&,
                                             const Tensor64&, const TrainConfig&, bool, const MiningResult*);

StepResult train_step(EmbedNet& net, LossWeights& weights, SgdState& sgd, std::span<const TrainingPair> batch,
                      const TrainConfig& cfg, double learning_rate) {
    if (batch.empty()) throw ShapeError("train_step: empty batch");
    ParamSet<float> grad = net.params().zeros_like();
    double d_w1 = 0.0;
    double d_w2 = 0.0;
    StepResult r;
    for (const auto& pair : batch) {
        const auto obj = evaluate_pair(net, weights, pair.exemplar, pair.search, cfg, true);
        if (!std::isfinite(obj.loss) || !obj.grad.all_finite()) {
            throw NumericalError("non-finite loss or gradient (loss = " + std::to_string(obj.loss) + ")");
        }
        grad += obj.grad;
        d_w1 += obj.d_pair_weight;
        d_w2 += obj.d_triplet_weight;
        r.loss += obj.loss;
        r.pair_loss += obj.pair_loss;
        r.triplet_loss += obj.triplet_loss;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    grad *= static_cast<float>(inv);
    r.loss *= inv;
    r.pair_loss *= inv;
    r.triplet_loss *= inv;

    if (sgd.velocity.convs.empty()) sgd.velocity = net.params().zeros_like();
    const auto mu = static_cast<float>(cfg.momentum);
    const auto lr = static_cast<float>(learning_rate);
    const auto wd = static_cast<float>(cfg.weight_decay);
    ParamSet<float>& params = net.mutable_params();
    for (std::size_t l = 0; l < params.convs.size(); ++l) {
        auto& p = params.convs[l];
        auto& v = sgd.velocity.convs[l];
        const auto& g = grad.convs[l];
        for (std::size_t i = 0; i < p.kernels.size(); ++i) {
            v.kernels[i] = mu * v.kernels[i] - lr * (g.kernels[i] + wd * p.kernels[i]);
            p.kernels[i] += v.kernels[i];
        }
        for (std::size_t i = 0; i < p.bias.size(); ++i) {
            v.bias[i] = mu * v.bias[i] - lr * g.bias[i];
            p.bias[i] += v.bias[i];
        }
    }
    sgd.velocity.score_bias = mu * sgd.velocity.score_bias - lr * grad.score_bias;
    params.score_bias += sgd.velocity.score_bias;

    if (cfg.mode == TrainMode::quad_learned) {
        sgd.pair_weight_velocity = cfg.momentum * sgd.pair_weight_velocity - learning_rate * d_w1 * inv;
        sgd.triplet_weight_velocity = cfg.momentum * sgd.triplet_weight_velocity - learning_rate * d_w2 * inv;
        weights.pair += sgd.pair_weight_velocity;
        weights.triplet += sgd.triplet_weight_velocity;
        weights = clamp_weights(weights);
    }
    r.weights = weights;
    return r;
}

double pair_distance(const EmbedNet& net, const TrainingPair& pair, std::size_t upsample_factor) {
    const Tensor z = embed(net, pair.exemplar);
    const Tensor x = embed(net, pair.search);
    const ScoreMap m = score_map(net, z, x);
    const Peak p = locate_peak(m.values, net.total_stride(), upsample_factor);
    const double center = static_cast<double>(kSearchSize / 2);
    return std::hypot(center + p.dx - pair.target_x, center + p.dy - pair.target_y);
}

double validate(const EmbedNet& net, std::span<const TrainingPair> pairs) {
    if (pairs.empty()) throw ShapeError("validate: no pairs");
    double total = 0.0;
    for (const auto& p : pairs) total += pair_distance(net, p);
    return total / static_cast<double>(pairs.size());
}

TrainResult train(const std::vector<Sequence>& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw DataError("train: empty dataset");
    if (data.size() < 2) throw DataError("train: need at least two sequences");
    std::size_t usable = 0;
    for (const auto& s : data) {
        if (s.size() >= 2) {
            ++usable;
        } else {
            log::warn("skipping sequence {}: fewer than two frames", s.name);
        }
    }
    if (usable == 0) throw DataError("train: no sequence with at least two frames");

    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(cfg.seed, 0));
    EmbedNet net = EmbedNet::init(cfg.layers(), derive_seed(cfg.seed, 1));
    LossWeights weights = clamp_weights(cfg.initial_weights);
    SgdState sgd;

    TrainResult result{net, weights, {}};
    result.report.mode = cfg.mode;
    double best_error = std::numeric_limits<double>::infinity();

    const auto n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(cfg.pairs_per_epoch))));
    const std::size_t n_train = cfg.pairs_per_epoch - std::min(n_val, cfg.pairs_per_epoch - 1);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.learning_rate = cfg.learning_rate(epoch);
        rec.min_pair_weight = weights.pair;
        rec.min_triplet_weight = weights.triplet;
        std::vector<TrainingPair> batch;
        for (std::size_t done = 0; done < n_train;) {
            const std::size_t take = std::min(cfg.batch_size, n_train - done);
            batch.clear();
            for (std::size_t k = 0; k < take; ++k) batch.push_back(sample_pair(data, rng, cfg));
            StepResult step;
            try {
                step = train_step(net, weights, sgd, batch, cfg, rec.learning_rate);
            } catch (const NumericalError& e) {
                throw NumericalError("training diverged in epoch " + std::to_string(epoch) + " at step " +
                                     std::to_string(rec.steps) + ": " + e.what());
            }
            done += take;
            ++rec.steps;
            rec.mean_loss += step.loss;
            rec.mean_pair_loss += step.pair_loss;
            rec.mean_triplet_loss += step.triplet_loss;
            rec.min_pair_weight = std::min(rec.min_pair_weight, weights.pair);
            rec.min_triplet_weight = std::min(rec.min_triplet_weight, weights.triplet);
            result.report.weight_trajectory.push_back(weights);
        }
        rec.mean_loss /= static_cast<double>(rec.steps);
        rec.mean_pair_loss /= static_cast<double>(rec.steps);
        rec.mean_triplet_loss /= static_cast<double>(rec.steps);
        rec.weights = weights;

        // Held-out pairs are redrawn each epoch from a seed-derived stream.
        Rng val_rng(derive_seed(cfg.seed, 1000 + epoch));
        double err = 0.0;
        for (std::size_t k = 0; k < n_val; ++k) err += pair_distance(net, sample_pair(data, val_rng, cfg));
        rec.validation_error = err / static_cast<double>(n_val);
        log::info("[{}] epoch {} lr {:.3g} loss {:.5f} val-err {:.3f} px w=({:.4f}, {:.4f})", to_string(cfg.mode),
                  epoch, rec.learning_rate, rec.mean_loss, rec.validation_error, weights.pair, weights.triplet);
        if (!std::isfinite(rec.validation_error)) {
            throw NumericalError("non-finite validation error in epoch " + std::to_string(epoch));
        }
        if (rec.validation_error < best_error) {
            best_error = rec.validation_error;
            result.net = net;
            result.weights = weights;
            result.report.best_epoch = epoch;
        }
        result.report.epochs.push_back(rec);
    }
    result.report.final_weights = weights;
    result.report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

std::string format_train_report(const TrainReport& report, bool include_timing) {
    using nlohmann::json;
    json epochs = json::array();
    double min_w1 = std::numeric_limits<double>::infinity();
    double min_w2 = std::numeric_limits<double>::infinity();
    for (const auto& e : report.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"learning_rate", e.learning_rate},
                          {"steps", e.steps},
                          {"mean_loss", e.mean_loss},
                          {"mean_pair_loss", e.mean_pair_loss},
                          {"mean_triplet_loss", e.mean_triplet_loss},
                          {"validation_mean_distance_error", e.validation_error},
                          {"loss_weights", {e.weights.pair, e.weights.triplet}},
                          {"min_loss_weights", {e.min_pair_weight, e.min_triplet_weight}}});
        min_w1 = std::min(min_w1, e.min_pair_weight);
        min_w2 = std::min(min_w2, e.min_triplet_weight);
    }
    json summary{{"mode", std::string(to_string(report.mode))},
                 {"epochs", report.epochs.size()},
                 {"best_epoch", report.best_epoch},
                 {"final_loss_weights", {report.final_weights.pair, report.final_weights.triplet}},
                 {"weight_threshold", report.final_weights.threshold},
                 {"min_loss_weights", {min_w1, min_w2}},
                 {"updates", report.weight_trajectory.size()}};
    if (!report.epochs.empty()) {
        summary["best_validation_error"] = report.epochs[report.best_epoch].validation_error;
    }
    if (include_timing) summary["wall_clock_seconds"] = report.wall_clock_seconds;
    json doc{{"epochs", epochs}, {"summary", summary}};
    return doc.dump(2) + "\n";
}

}  // namespace quadtrack
