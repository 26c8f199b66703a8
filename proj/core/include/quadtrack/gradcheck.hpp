#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace quadtrack {

struct GradCheck {
    std::string name;
    std::string precision;  // "f64" or "f32"
    std::size_t samples = 0;
    std::size_t skipped = 0;  // samples whose stencil crossed a ReLU or pool switch
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed() const { return samples > 0 && max_rel_error <= tolerance; }
};

struct GradcheckOptions {
    std::uint64_t seed = 1;
    double tolerance64 = 1e-6;
    double tolerance32 = 1e-3;
    bool end_to_end = true;
    std::size_t coordinates_per_layer = 4;  // end-to-end: kernel entries sampled per conv layer
    std::size_t directions = 6;             // end-to-end: random directional derivatives
};

/// Analytic gradients of every differentiable layer against central finite
/// differences, in 64-bit, plus the end-to-end desk training step in 64 and
/// 32-bit.
std::vector<GradCheck> run_gradcheck(const GradcheckOptions& options = {});

std::string format_gradcheck_table(const std::vector<GradCheck>& checks);
bool all_passed(const std::vector<GradCheck>& checks);

}  // namespace quadtrack
