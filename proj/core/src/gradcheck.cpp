#include "quadtrack/gradcheck.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <optional>
#include <random>

#include "quadtrack/embed_net.hpp"
#include "quadtrack/losses.hpp"
#include "quadtrack/mining.hpp"
#include "quadtrack/random.hpp"
#include "quadtrack/synth.hpp"
#include "quadtrack/tensor_ops.hpp"
#include "quadtrack/trainer.hpp"
#include "quadtrack/xcorr_head.hpp"

namespace quadtrack {

namespace {

constexpr double kEps = 1e-5;
// A random direction moves every unit of the network at once; a smaller step
// keeps most of those stencils clear of ReLU kinks.
constexpr double kDirectionEps = 1e-6;

struct Tally {
    GradCheck check;
    double floor;

    Tally(std::string name, std::string precision, double tolerance, double floor_ = 0.0) : floor(floor_) {
        check.name = std::move(name);
        check.precision = std::move(precision);
        check.tolerance = tolerance;
    }
    void add(double analytic, double numeric, double at_least = 0.0) {
        check.max_rel_error =
            std::max(check.max_rel_error, relative_error(analytic, numeric, std::max(floor, at_least)));
        ++check.samples;
    }
};

Tensor64 random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Tensor64 t(shape);
    for (auto& v : t.span()) v = nd(rng);
    return t;
}

Grid64 random_grid(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Grid64 g(rows, cols);
    for (auto& v : g.span()) v = nd(rng);
    return g;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// FD of f over every entry of `x` against `analytic`.
// Components far below the largest one in a sweep are dominated by
// finite-difference round-off, so the error floor is tied to that component.
constexpr double kFloorFraction = 1e-3;

template <typename F>
void sweep(Tally& tally, std::span<double> x, std::span<const double> analytic, F&& f) {
    double largest = 0.0;
    for (double a : analytic) largest = std::max(largest, std::abs(a));
    tally.floor = std::max(1e-12, kFloorFraction * largest);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        const double numeric = central_difference(
            [&](double d) {
                x[i] = keep + d;
                const double v = f();
                x[i] = keep;
                return v;
            },
            kEps);
        tally.add(analytic[i], numeric);
    }
}

GradCheck check_pair_loss(Rng& rng, double tol) {
    Tally t("pair_loss d/dscores", "f64", tol, 0.0);
    Grid64 v = random_grid(rng, 17, 17);
    const LabelMap labels = build_label_map(17);
    const WeightMap w = adapt_weights(v, labels, init_balance_weights(labels));
    const PairLoss pl = pair_loss(v, labels, w);
    sweep(t, v.span(), pl.grad.span(), [&] { return pair_loss(v, labels, w).loss; });
    return t.check;
}

GradCheck check_triplet_loss(Rng& rng, double tol) {
    Tally t("triplet_loss d/df", "f64", tol, 0.0);
    for (int k = 0; k < 50; ++k) {
        double f[2] = {uniform(rng, -4.0, 4.0), uniform(rng, -4.0, 4.0)};
        const TripletLoss tl = triplet_loss(f[0], f[1]);
        const double analytic[2] = {tl.d_plus, tl.d_minus};
        sweep(t, f, analytic, [&] { return triplet_loss(f[0], f[1]).loss; });
    }
    return t.check;
}

GradCheck check_combine_loss(Rng& rng, double tol) {
    Tally t("combine_loss d/d(L1,L2,w1,w2)", "f64", tol, 0.0);
    for (int k = 0; k < 50; ++k) {
        double x[4] = {uniform(rng, 0.0, 3.0), uniform(rng, 0.0, 0.5), uniform(rng, 0.05, 1.0),
                       uniform(rng, 0.05, 1.0)};
        auto eval = [&] { return combine_loss(x[0], x[1], {x[2], x[3], kDefaultWeightThreshold}); };
        const CombinedLoss c = eval();
        const double analytic[4] = {c.d_pair_loss, c.d_triplet_loss, c.d_pair_weight, c.d_triplet_weight};
        sweep(t, x, analytic, [&] { return eval().loss; });
    }
    return t.check;
}

std::vector<GradCheck> check_score_map(Rng& rng, double tol) {
    Tensor64 z = random_tensor(rng, {1, 4, 3, 3});
    Tensor64 x = random_tensor(rng, {1, 4, 7, 7});
    double bias = 0.3;
    const Grid64 up = random_grid(rng, 5, 5);
    auto f = [&] {
        const auto m = score_map(bias, z, x);
        return dot(up.span(), m.values.span());
    };
    const auto g = score_map_grad(up, z, x);
    Tally tz("score_map d/dexemplar", "f64", tol, 0.0);
    Tally tx("score_map d/dsearch", "f64", tol, 0.0);
    Tally tb("score_map d/dbias", "f64", tol, 0.0);
    sweep(tz, z.span(), g.exemplar.span(), f);
    sweep(tx, x.span(), g.search.span(), f);
    const double gb[1] = {g.bias};
    sweep(tb, std::span<double>(&bias, 1), gb, f);
    return {tz.check, tx.check, tb.check};
}

std::vector<GradCheck> check_conv(Rng& rng, double tol, std::size_t stride) {
    Tensor64 in = random_tensor(rng, {1, 3, 9, 9});
    Tensor64 k = random_tensor(rng, {4, 3, 3, 3});
    std::vector<double> b{0.1, -0.2, 0.3, 0.05};
    const std::size_t o = valid_extent(9, 3, stride);
    const Tensor64 up = random_tensor(rng, {1, 4, o, o});
    auto f = [&] { return dot(up.span(), conv2d(in, k, std::span<const double>(b), stride).span()); };
    const auto g = conv2d_grad(in, k, up, stride);
    const std::string tag = "conv2d stride " + std::to_string(stride);
    Tally ti(tag + " d/dinput", "f64", tol, 1e-10);
    Tally tk(tag + " d/dkernels", "f64", tol, 1e-10);
    Tally tb(tag + " d/dbias", "f64", tol, 1e-10);
    sweep(ti, in.span(), g.input.span(), f);
    sweep(tk, k.span(), g.kernels.span(), f);
    sweep(tb, b, g.bias, f);
    return {ti.check, tk.check, tb.check};
}

GradCheck check_relu(Rng& rng, double tol) {
    Tally t("relu d/dinput", "f64", tol, 0.0);
    Tensor64 in = random_tensor(rng, {1, 2, 6, 6});
    // Keep every entry at least 10 eps from the kink.
    for (auto& v : in.span()) v = std::copysign(std::abs(v) + 10 * kEps, v);
    const Tensor64 up = random_tensor(rng, in.shape());
    auto f = [&] { return dot(up.span(), relu(in).span()); };
    sweep(t, in.span(), relu_grad(in, up).span(), f);
    return t.check;
}

GradCheck check_max_pool(Rng& rng, double tol) {
    Tally t("max_pool 3/2 d/dinput", "f64", tol, 0.0);
    // Distinct values spaced far beyond eps so no window changes its argmax.
    Tensor64 in(Shape{1, 2, 9, 9});
    std::vector<double> values(in.size());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = 0.01 * static_cast<double>(i);
    std::shuffle(values.begin(), values.end(), rng);
    std::copy(values.begin(), values.end(), in.span().begin());
    const auto pooled = max_pool(in, 3, 2);
    const Tensor64 up = random_tensor(rng, pooled.output.shape());
    auto f = [&] { return dot(up.span(), max_pool(in, 3, 2).output.span()); };
    sweep(t, in.span(), max_pool_grad(in.shape(), pooled.argmax, up).span(), f);
    return t.check;
}

// Loss of one training pair with the hard pair and weight map held fixed,
// evaluated independently of evaluate_pair(), plus a hash of every ReLU sign
// and pool argmax so that stencils straddling a kink can be recognized.
struct EndToEnd {
    const TrainConfig& cfg;
    const LossWeights& weights;
    const Tensor64& exemplar;
    const Tensor64& search;
    const MiningResult& mining;

    static void mix(std::uint64_t& h, std::uint64_t v) { h = mix_seed(h ^ v); }

    // Pool winners, except in windows whose maximum is tied: those come from
    // identical input patches (mean-filled crop borders), move together under
    // any parameter change, and only swap through round-off.
    static void pool_pattern(std::uint64_t& h, const EmbedNet64& net, const ForwardCache<double>& cache,
                             std::size_t l) {
        const LayerSpec& spec = net.layers()[l];
        const bool after_relu = l > 0 && net.layers()[l - 1].kind == LayerKind::relu;
        if (!after_relu) {
            for (std::uint32_t a : cache.argmax[l]) mix(h, a);
            return;
        }
        const Tensor64& pre = cache.inputs[l - 1];
        const Shape& in = cache.input_shapes[l];
        const std::size_t oh = valid_extent(in.h, spec.size, spec.stride);
        const std::size_t ow = valid_extent(in.w, spec.size, spec.stride);
        std::size_t k = 0;
        for (std::size_t c = 0; c < in.c; ++c) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox, ++k) {
                    const std::uint32_t a = cache.argmax[l][k];
                    const double best = std::max(0.0, pre[a]);
                    std::size_t ties = 0;
                    for (std::size_t dy = 0; dy < spec.size; ++dy) {
                        for (std::size_t dx = 0; dx < spec.size; ++dx) {
                            const double v = std::max(0.0, pre.at(0, c, oy * spec.stride + dy, ox * spec.stride + dx));
                            ties += best - v <= 1e-9 * std::max(1.0, best) ? 1 : 0;
                        }
                    }
                    mix(h, ties > 1 ? ~std::uint64_t{0} : a);
                }
            }
        }
    }

    static void pattern(std::uint64_t& h, const EmbedNet64& net, const ForwardCache<double>& cache) {
        for (std::size_t l = 0; l < net.layers().size(); ++l) {
            if (net.layers()[l].kind == LayerKind::relu) {
                std::uint64_t bits = 0;
                std::size_t n = 0;
                for (double v : cache.inputs[l].span()) {
                    bits = (bits << 1) | (v > 0.0 ? 1u : 0u);
                    if (++n % 64 == 0) mix(h, bits);
                }
                mix(h, bits);
            } else if (net.layers()[l].kind == LayerKind::maxpool) {
                pool_pattern(h, net, cache, l);
            }
        }
    }

    std::pair<double, std::uint64_t> operator()(const EmbedNet64& net) const {
        const auto fz = forward(net, exemplar);
        const auto fx = forward(net, search);
        const Grid64 v = score_map(net, fz.feature, fx.feature).values;
        const LabelMap labels = build_label_map(v.rows(), cfg.label_radius);
        double loss = pair_loss(v, labels, mining.weights).loss;
        if (cfg.uses_triplet()) {
            const auto& p = mining.positive;
            const auto& q = mining.negative;
            loss = combine_loss(loss, triplet_loss(v(p.row, p.col), v(q.row, q.col)).loss, weights).loss;
        }
        std::uint64_t h = 0;
        pattern(h, net, fz.cache);
        pattern(h, net, fx.cache);
        return {loss, h};
    }
};

std::vector<GradCheck> check_end_to_end(const GradcheckOptions& opt) {
    Rng rng(derive_seed(opt.seed, 100));
    SynthSpec spec;
    spec.num_sequences = 1;
    const Sequence seq = synth_sequence(spec, opt.seed, 0);
    const TrainingPair pair = make_pair(seq, 0, 3, false);
    TrainConfig cfg;
    cfg.mode = TrainMode::quad_learned;
    const LossWeights weights{0.7, 0.3};

    // Fresh nets have zero biases past the first layer, which puts every unit
    // fed by an all-zero patch exactly on its ReLU kink; jitter them.
    EmbedNet net32 = EmbedNet::init(desk_architecture(), derive_seed(opt.seed, 101));
    {
        std::normal_distribution<double> jitter(0.0, 0.01);
        auto& p = net32.mutable_params();
        for (auto& c : p.convs) {
            for (auto& b : c.bias) b += static_cast<float>(jitter(rng));
        }
        p.score_bias = static_cast<float>(jitter(rng));
    }
    EmbedNet64 net = net32.cast<double>();
    const Tensor64 z = pair.exemplar.cast<double>();
    const Tensor64 x = pair.search.cast<double>();

    const auto base = evaluate_pair(net, weights, z, x, cfg, true);
    const auto base32 = evaluate_pair(net32, weights, pair.exemplar, pair.search, cfg, true, &base.mining);
    const std::vector<double> g64 = base.grad.flatten();
    const std::vector<double> g32 = base32.grad.flatten();
    const EndToEnd loss{cfg, weights, z, x, base.mining};
    const std::uint64_t base_pattern = loss(net).second;

    double g_max = 0.0;
    for (double g : g64) g_max = std::max(g_max, std::abs(g));
    Tally t64("end-to-end desk step d/dtheta", "f64", opt.tolerance64, kFloorFraction * g_max);
    Tally t32("end-to-end desk step d/dtheta", "f32", opt.tolerance32, kFloorFraction * g_max);

    // Numeric derivative along `dir` (sparse: index/value pairs), or nothing
    // when the stencil changes the activation pattern.
    auto directional = [&](const std::vector<std::pair<std::size_t, double>>& dir, double h) -> std::optional<double> {
        const ParamSet<double> keep = net.params();
        double values[2];
        for (int s = 0; s < 2; ++s) {
            net.mutable_params() = keep;
            for (const auto& [i, d] : dir) net.mutable_params().entry(i) += (s == 0 ? h : -h) * d;
            const auto [l, h] = loss(net);
            values[s] = l;
            if (h != base_pattern) {
                net.mutable_params() = keep;
                return std::nullopt;
            }
        }
        net.mutable_params() = keep;
        return (values[0] - values[1]) / (2 * h);
    };
    auto record = [&](const std::vector<std::pair<std::size_t, double>>& dir) {
        const auto numeric = directional(dir, dir.size() == 1 ? kEps : kDirectionEps);
        if (!numeric) {
            ++t64.check.skipped;
            if (dir.size() == 1) ++t32.check.skipped;
            return false;
        }
        double a64 = 0.0;
        double a32 = 0.0;
        double mag = 0.0;
        for (const auto& [i, d] : dir) {
            a64 += g64[i] * d;
            a32 += g32[i] * d;
            mag += std::abs(g64[i] * d);
        }
        // A directional derivative is a sum of many terms that may cancel;
        // its floor scales with the summed term magnitudes. Float gradients
        // are compared against the finite differences per coordinate only and
        // against the 64-bit gradient everywhere (below).
        t64.add(a64, *numeric, kFloorFraction * mag);
        if (dir.size() == 1) t32.add(a32, *numeric);
        return true;
    };

    // Coordinates: a few kernel entries and one bias per conv layer, then the score bias.
    std::size_t offset = 0;
    for (const auto& c : net.params().convs) {
        std::size_t taken = 0;
        for (std::size_t tries = 0; taken < opt.coordinates_per_layer && tries < 8 * opt.coordinates_per_layer; ++tries) {
            taken += record({{offset + uniform_index(rng, c.kernels.size()), 1.0}}) ? 1 : 0;
        }
        offset += c.kernels.size();
        record({{offset + uniform_index(rng, c.bias.size()), 1.0}});
        offset += c.bias.size();
    }
    record({{offset, 1.0}});

    // Random unit directions over every entry of theta.
    std::normal_distribution<double> nd(0.0, 1.0);
    const std::size_t n = g64.size();
    for (std::size_t k = 0, tries = 0; k < opt.directions && tries < 8 * opt.directions; ++tries) {
        std::vector<std::pair<std::size_t, double>> dir(n);
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dir[i] = {i, nd(rng)};
            norm += dir[i].second * dir[i].second;
        }
        for (auto& e : dir) e.second /= std::sqrt(norm);
        k += record(dir) ? 1 : 0;
    }
    Tally all32("end-to-end desk step vs f64 gradient", "f32", opt.tolerance32, kFloorFraction * g_max);
    for (std::size_t i = 0; i < n; ++i) all32.add(g32[i], g64[i]);
    return {t64.check, t32.check, all32.check};
}

}  // namespace

std::vector<GradCheck> run_gradcheck(const GradcheckOptions& opt) {
    std::vector<GradCheck> out;
    auto append = [&](std::vector<GradCheck> v) { out.insert(out.end(), v.begin(), v.end()); };
    const double tol = opt.tolerance64;
    Rng rng(derive_seed(opt.seed, 0));
    out.push_back(check_pair_loss(rng, tol));
    out.push_back(check_triplet_loss(rng, tol));
    out.push_back(check_combine_loss(rng, tol));
    append(check_score_map(rng, tol));
    append(check_conv(rng, tol, 1));
    append(check_conv(rng, tol, 2));
    out.push_back(check_relu(rng, tol));
    out.push_back(check_max_pool(rng, tol));
    if (opt.end_to_end) append(check_end_to_end(opt));
    return out;
}

std::string format_gradcheck_table(const std::vector<GradCheck>& checks) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-36s %-4s %7s %7s %12s %9s  %s\n", "check", "prec", "samples", "skipped",
                  "max_rel_err", "tol", "result");
    out += line;
    for (const auto& c : checks) {
        std::snprintf(line, sizeof line, "%-36s %-4s %7zu %7zu %12.3e %9.1e  %s\n", c.name.c_str(),
                      c.precision.c_str(), c.samples, c.skipped, c.max_rel_error, c.tolerance,
                      c.passed() ? "PASS" : "FAIL");
        out += line;
    }
    return out;
}

bool all_passed(const std::vector<GradCheck>& checks) {
    for (const auto& c : checks) {
        if (!c.passed()) return false;
    }
    return !checks.empty();
}

}  // namespace quadtrack
