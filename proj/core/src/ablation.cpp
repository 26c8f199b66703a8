#include "quadtrack/ablation.hpp"

#include "quadtrack/log.hpp"

namespace quadtrack {

std::vector<ReportEntry> run_ablation(const std::vector<Sequence>& train_set, const std::vector<Sequence>& test_set,
                                      const TrainConfig& config, const TrackerConfig& tracker, std::size_t threads) {
    std::vector<ReportEntry> entries;
    for (TrainMode mode : kAllModes) {
        TrainConfig cfg = config;
        cfg.mode = mode;
        log::info("ablation: training {}", to_string(mode));
        const TrainResult trained = train(train_set, cfg);
        EvalResult r = run_ope(model_tracker(trained.net, tracker), test_set, threads);
        log::info("ablation: {} mean IoU {:.4f}, AUC {:.4f}, precision@20 {:.4f}", to_string(mode),
                  r.aggregate.mean_iou, r.aggregate.auc, r.aggregate.precision_at_20);
        entries.push_back({std::string(to_string(mode)), std::move(r), format_train_report(trained.report)});
    }
    EvalResult still = run_ope(static_tracker(), test_set, threads);
    log::info("ablation: static_box mean IoU {:.4f}", still.aggregate.mean_iou);
    entries.push_back({"static_box", std::move(still), {}});
    return entries;
}

}  // namespace quadtrack
