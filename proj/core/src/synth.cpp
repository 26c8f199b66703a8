#include "quadtrack/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "quadtrack/error.hpp"
#include "quadtrack/log.hpp"
#include "quadtrack/random.hpp"

namespace quadtrack {

namespace fs = std::filesystem;

SynthSpec SynthSpec::from_config(const KeyValueConfig& cfg) {
    cfg.reject_unknown({"num_sequences", "num_test_sequences", "frames_per_sequence", "image_width", "image_height",
                        "target_min", "target_max", "motion_amplitude", "scale_drift", "distractor_prob",
                        "texture_seed"});
    SynthSpec s;
    s.num_sequences = static_cast<std::size_t>(cfg.get_int("num_sequences", static_cast<long long>(s.num_sequences)));
    s.num_test_sequences =
        static_cast<std::size_t>(cfg.get_int("num_test_sequences", static_cast<long long>(s.num_test_sequences)));
    s.frames_per_sequence =
        static_cast<std::size_t>(cfg.get_int("frames_per_sequence", static_cast<long long>(s.frames_per_sequence)));
    s.image_width = static_cast<std::size_t>(cfg.get_int("image_width", static_cast<long long>(s.image_width)));
    s.image_height = static_cast<std::size_t>(cfg.get_int("image_height", static_cast<long long>(s.image_height)));
    s.target_min = cfg.get_double("target_min", s.target_min);
    s.target_max = cfg.get_double("target_max", s.target_max);
    s.motion_amplitude = cfg.get_double("motion_amplitude", s.motion_amplitude);
    s.scale_drift = cfg.get_double("scale_drift", s.scale_drift);
    s.distractor_prob = cfg.get_double("distractor_prob", s.distractor_prob);
    s.texture_seed = static_cast<std::uint64_t>(cfg.get_int("texture_seed", 0));
    s.validate();
    return s;
}

void SynthSpec::validate() const {
    if (num_sequences + num_test_sequences == 0 || frames_per_sequence == 0 || image_width == 0 ||
        image_height == 0) {
        throw ShapeError("synth spec: counts and image size must be positive");
    }
    if (!(target_min > 0.0) || !(target_max >= target_min)) {
        throw ShapeError("synth spec: need 0 < target_min <= target_max");
    }
    // Size drift may grow the target by up to 25%.
    if (target_max * 1.25 >= static_cast<double>(std::min(image_width, image_height))) {
        throw ShapeError("synth spec: target larger than image");
    }
    if (motion_amplitude < 0.0 || scale_drift < 0.0 || scale_drift >= 0.5 || distractor_prob < 0.0 ||
        distractor_prob > 1.0) {
        throw ShapeError("synth spec: motion, drift or distractor probability out of range");
    }
}

namespace {

struct Wave {
    double fu, fv, phase, amp;
};

// Smooth colored pattern in box-normalized coordinates, so it scales with the box.
struct Texture {
    Rgb base{};
    std::array<std::array<Wave, 3>, 3> waves{};

    Rgb at(double u, double v) const {
        Rgb c{};
        const bool border = u < 0.1 || u > 0.9 || v < 0.1 || v > 0.9;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            double x = base[ch];
            for (const auto& w : waves[ch]) {
                x += w.amp * std::sin(2.0 * std::numbers::pi * (w.fu * u + w.fv * v) + w.phase);
            }
            if (border) x = 0.35 * x;
            c[ch] = static_cast<float>(std::clamp(x, 0.0, 1.0));
        }
        return c;
    }
};

Texture random_texture(Rng& rng, const Rgb* base) {
    Texture t;
    for (std::size_t ch = 0; ch < 3; ++ch) {
        t.base[ch] = base ? (*base)[ch] : static_cast<float>(uniform(rng, 0.2, 0.8));
        for (auto& w : t.waves[ch]) {
            w.fu = uniform(rng, -3.0, 3.0);
            w.fv = uniform(rng, -3.0, 3.0);
            w.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
            w.amp = uniform(rng, 0.08, 0.22);
        }
    }
    return t;
}

// Value noise: random colors on a coarse lattice, bilinear, plus static grain.
Tensor make_background(const SynthSpec& spec, Rng& rng) {
    constexpr std::size_t cell = 12;
    const std::size_t gw = spec.image_width / cell + 2;
    const std::size_t gh = spec.image_height / cell + 2;
    std::vector<Rgb> lattice(gw * gh);
    for (auto& c : lattice) {
        for (auto& v : c) v = static_cast<float>(uniform(rng, 0.25, 0.75));
    }
    Tensor bg(1, 3, spec.image_height, spec.image_width);
    for (std::size_t y = 0; y < spec.image_height; ++y) {
        const double gy = static_cast<double>(y) / cell;
        const auto y0 = static_cast<std::size_t>(gy);
        const double ty = gy - static_cast<double>(y0);
        for (std::size_t x = 0; x < spec.image_width; ++x) {
            const double gx = static_cast<double>(x) / cell;
            const auto x0 = static_cast<std::size_t>(gx);
            const double tx = gx - static_cast<double>(x0);
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double a = lattice[y0 * gw + x0][ch];
                const double b = lattice[y0 * gw + x0 + 1][ch];
                const double c = lattice[(y0 + 1) * gw + x0][ch];
                const double d = lattice[(y0 + 1) * gw + x0 + 1][ch];
                const double v = (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
                bg.at(0, ch, y, x) = static_cast<float>(std::clamp(v + uniform(rng, -0.06, 0.06), 0.0, 1.0));
            }
        }
    }
    return bg;
}

// Alpha-composites the textured box with exact fractional edge coverage.
void draw_box(Tensor& img, const BoundingBox& b, const Texture& tex) {
    const auto W = static_cast<long>(img.shape().w);
    const auto H = static_cast<long>(img.shape().h);
    const long x0 = std::max(0L, static_cast<long>(std::floor(b.x)));
    const long x1 = std::min(W, static_cast<long>(std::ceil(b.x + b.w)));
    const long y0 = std::max(0L, static_cast<long>(std::floor(b.y)));
    const long y1 = std::min(H, static_cast<long>(std::ceil(b.y + b.h)));
    for (long y = y0; y < y1; ++y) {
        const double py = static_cast<double>(y);
        const double cov_y = std::clamp(std::min(py + 1.0, b.y + b.h) - std::max(py, b.y), 0.0, 1.0);
        const double v = std::clamp((py + 0.5 - b.y) / b.h, 0.0, 1.0);
        for (long x = x0; x < x1; ++x) {
            const double px = static_cast<double>(x);
            const double cov_x = std::clamp(std::min(px + 1.0, b.x + b.w) - std::max(px, b.x), 0.0, 1.0);
            const double alpha = cov_x * cov_y;
            if (alpha <= 0.0) continue;
            const double u = std::clamp((px + 0.5 - b.x) / b.w, 0.0, 1.0);
            const Rgb c = tex.at(u, v);
            for (std::size_t ch = 0; ch < 3; ++ch) {
                float& dst = img.at(0, ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
                dst = static_cast<float>((1.0 - alpha) * dst + alpha * c[ch]);
            }
        }
    }
}

void quantize(Tensor& img) {
    for (auto& v : img.span()) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
}

double q2(double v) { return std::round(v * 100.0) / 100.0; }

std::vector<BoundingBox> random_walk(const SynthSpec& spec, Rng& rng) {
    const double W = static_cast<double>(spec.image_width);
    const double H = static_cast<double>(spec.image_height);
    const double w0 = uniform(rng, spec.target_min, spec.target_max);
    const double h0 = std::clamp(w0 * uniform(rng, 0.75, 1.33), spec.target_min, spec.target_max);
    double cx = uniform(rng, w0, W - w0);
    double cy = uniform(rng, h0, H - h0);
    double vx = 0.0;
    double vy = 0.0;
    double scale = 1.0;
    std::vector<BoundingBox> path;
    path.reserve(spec.frames_per_sequence);
    for (std::size_t t = 0; t < spec.frames_per_sequence; ++t) {
        if (t > 0) {
            if (spec.motion_amplitude > 0.0) {
                std::normal_distribution<double> kick(0.0, 0.5 * spec.motion_amplitude);
                vx = 0.7 * vx + kick(rng);
                vy = 0.7 * vy + kick(rng);
                const double speed = std::hypot(vx, vy);
                if (speed > spec.motion_amplitude) {
                    vx *= spec.motion_amplitude / speed;
                    vy *= spec.motion_amplitude / speed;
                }
            }
            if (spec.scale_drift > 0.0) {
                scale = std::clamp(scale * (1.0 + uniform(rng, -spec.scale_drift, spec.scale_drift)), 0.8, 1.25);
            }
            cx += vx;
            cy += vy;
        }
        const double w = w0 * scale;
        const double h = h0 * scale;
        // Keep the box inside the frame; bounce off the borders.
        if (cx - w / 2 < 0.0 || cx + w / 2 > W) {
            cx = std::clamp(cx, w / 2, W - w / 2);
            vx = -vx;
        }
        if (cy - h / 2 < 0.0 || cy + h / 2 > H) {
            cy = std::clamp(cy, h / 2, H - h / 2);
            vy = -vy;
        }
        BoundingBox b{q2(cx - w / 2), q2(cy - h / 2), q2(w), q2(h)};
        b.x = std::clamp(b.x, 0.0, q2(W - b.w));
        b.y = std::clamp(b.y, 0.0, q2(H - b.h));
        path.push_back(b);
    }
    return path;
}

struct Scene {
    Tensor background;
    Texture target;
    Texture distractor;
    bool has_distractor = false;
    std::vector<BoundingBox> target_path;
    std::vector<BoundingBox> distractor_path;
};

Scene make_scene(const SynthSpec& spec, std::uint64_t seed, std::size_t index) {
    spec.validate();
    Rng rng(derive_seed(seed, index));
    Rng bg_rng(derive_seed(derive_seed(seed, index), spec.texture_seed + 1));
    Scene s;
    s.background = make_background(spec, bg_rng);
    s.target = random_texture(rng, nullptr);
    s.target_path = random_walk(spec, rng);
    s.has_distractor = uniform(rng, 0.0, 1.0) < spec.distractor_prob;
    // Distractors share the target's base color but not its pattern.
    s.distractor = random_texture(rng, &s.target.base);
    s.distractor_path = random_walk(spec, rng);
    return s;
}

std::string seq_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "seq_%04zu", index);
    return buf;
}

Sequence render(const Scene& scene, const std::vector<BoundingBox>& path, bool with_distractor, std::string name) {
    Sequence seq;
    seq.name = std::move(name);
    seq.boxes = path;
    seq.frames.reserve(path.size());
    for (std::size_t t = 0; t < path.size(); ++t) {
        Tensor img = scene.background;
        if (with_distractor) draw_box(img, scene.distractor_path[t % scene.distractor_path.size()], scene.distractor);
        draw_box(img, path[t], scene.target);
        quantize(img);
        seq.frames.push_back(std::move(img));
    }
    return seq;
}

}  // namespace

Sequence synth_sequence(const SynthSpec& spec, std::uint64_t seed, std::size_t index) {
    const Scene scene = make_scene(spec, seed, index);
    return render(scene, scene.target_path, scene.has_distractor, seq_name(index));
}

Sequence render_sequence(const SynthSpec& spec, std::uint64_t seed, std::size_t index,
                         const std::vector<BoundingBox>& path) {
    for (const auto& b : path) {
        if (!b.valid()) throw ShapeError("render_sequence: box with non-positive area");
    }
    const Scene scene = make_scene(spec, seed, index);
    return render(scene, path, false, seq_name(index));
}

void write_sequence(const Sequence& seq, const fs::path& dir) {
    fs::create_directories(dir / "img");
    for (std::size_t t = 0; t < seq.size(); ++t) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%04zu.ppm", t + 1);
        write_ppm(dir / "img" / buf, seq.frame(t));
    }
    write_text_file(dir / "groundtruth_rect.txt", format_groundtruth(seq.boxes));
}

void synth_generate(const SynthSpec& spec, std::uint64_t seed, const fs::path& out_dir) {
    spec.validate();
    fs::create_directories(out_dir);
    const bool split = spec.num_test_sequences > 0;
    const std::size_t total = spec.num_sequences + spec.num_test_sequences;
    for (std::size_t i = 0; i < total; ++i) {
        fs::path dir = out_dir;
        if (split) dir /= i < spec.num_sequences ? "train" : "test";
        write_sequence(synth_sequence(spec, seed, i), dir / seq_name(i));
    }
    log::info("wrote {} synthetic sequences to {}", total, out_dir.string());
}

}  // namespace quadtrack
