#pragma once

#include <vector>

#include "quadtrack/report.hpp"
#include "quadtrack/trainer.hpp"

namespace quadtrack {

/// Trains one network per training mode from the same seed (so every mode
/// sees the same initialization and pair stream), runs OPE on `test` and
/// appends a static-box baseline. Entry names are the mode names and
/// "static_box".
std::vector<ReportEntry> run_ablation(const std::vector<Sequence>& train_set, const std::vector<Sequence>& test_set,
                                      const TrainConfig& config, const TrackerConfig& tracker = {},
                                      std::size_t threads = 1);

}  // namespace quadtrack
