#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "quadtrack/data_io.hpp"
#include "quadtrack/kv_config.hpp"

namespace quadtrack {

/// Parameters of the synthetic video generator.
struct SynthSpec {
    std::size_t num_sequences = 10;
    std::size_t num_test_sequences = 0;  // > 0 splits the output into train/ and test/
    std::size_t frames_per_sequence = 40;
    std::size_t image_width = 128;
    std::size_t image_height = 128;
    double target_min = 16.0;  // side lengths in pixels
    double target_max = 32.0;
    double motion_amplitude = 3.0;  // max per-frame displacement, pixels
    double scale_drift = 0.01;      // max per-frame relative size change
    double distractor_prob = 0.5;
    std::uint64_t texture_seed = 0;

    static SynthSpec from_config(const KeyValueConfig& cfg);
    void validate() const;
};

/// Sequence `index` of the dataset defined by (spec, seed), rendered in memory.
/// Frames are quantized to 8 bits exactly as written to disk.
Sequence synth_sequence(const SynthSpec& spec, std::uint64_t seed, std::size_t index);

/// Same scene (background and target texture) as synth_sequence, but with the
/// target following `path` and no distractor.
Sequence render_sequence(const SynthSpec& spec, std::uint64_t seed, std::size_t index,
                         const std::vector<BoundingBox>& path);

/// Writes the dataset: <out>/seq_NNNN/{img/NNNN.ppm, groundtruth_rect.txt},
/// or <out>/train/... and <out>/test/... when num_test_sequences > 0.
void synth_generate(const SynthSpec& spec, std::uint64_t seed, const std::filesystem::path& out_dir);

void write_sequence(const Sequence& seq, const std::filesystem::path& dir);

}  // namespace quadtrack
