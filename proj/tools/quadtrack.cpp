#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "quadtrack/ablation.hpp"
#include "quadtrack/error.hpp"
#include "quadtrack/eval.hpp"
#include "quadtrack/gradcheck.hpp"
#include "quadtrack/log.hpp"
#include "quadtrack/report.hpp"
#include "quadtrack/synth.hpp"
#include "quadtrack/trainer.hpp"

namespace fs = std::filesystem;
using namespace quadtrack;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Keys prefixed "tracker." configure the tracker; everything else is training.
void split_config(const KeyValueConfig& all, KeyValueConfig& train, KeyValueConfig& tracker) {
    const std::string prefix = "tracker.";
    for (const auto& [k, v] : all.values()) {
        if (k.rfind(prefix, 0) == 0) {
            tracker.set(k.substr(prefix.size()), v);
        } else {
            train.set(k, v);
        }
    }
}

TrackerConfig tracker_config(const std::string& path) {
    if (path.empty()) return {};
    KeyValueConfig train;
    KeyValueConfig tracker;
    split_config(KeyValueConfig::load(path), train, tracker);
    return TrackerConfig::from_config(tracker);
}

// DIR/<part> when it exists, DIR otherwise.
std::vector<Sequence> load_part(const fs::path& dir, const char* part) {
    if (fs::is_directory(dir / part)) return load_dataset(dir / part);
    return load_dataset(dir);
}

std::vector<BoundingBox> boxes_for(const Sequence& seq, const fs::path& file) {
    std::vector<BoundingBox> out;
    std::size_t expected = 0;
    for (const auto& fb : read_boxes(file)) {
        if (fb.frame != expected++) throw DataError(file.string() + ": frame indices must be 0, 1, 2, ...");
        out.push_back(fb.box);
    }
    if (out.size() != seq.size()) {
        throw DataError(file.string() + ": " + std::to_string(out.size()) + " boxes for " + std::to_string(seq.size()) +
                        " frames of " + seq.name);
    }
    return out;
}

void write_report(const fs::path& out, const std::vector<ReportEntry>& entries, bool timing) {
    ReportOptions opt;
    opt.include_timing = timing;
    write_text_file(out, format_report(entries, opt));
}

}  // namespace

int main(int argc, char** argv) {
    log::configure_from_env();
    CLI::App app{"Quadruplet-network one-shot tracker: synthesize data, train, track and evaluate."};
    app.require_subcommand(0, 1);
    app.fallthrough();  // global options such as --threads may follow the subcommand
    std::size_t threads = 1;
    app.add_option("--threads", threads, "Worker threads for eval (default 1)")->check(CLI::PositiveNumber);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    std::string synth_spec;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    synth->add_option("--spec", synth_spec, "Key-value generator spec")->required();
    synth->add_option("--seed", synth_seed, "Dataset seed")->required();
    synth->add_option("--out", synth_out, "Output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "Train an embedding network");
    std::string train_data;
    std::string train_config;
    std::string train_out;
    std::string train_mode;
    std::string train_report;
    bool train_timing = false;
    train_cmd->add_option("--data", train_data, "Dataset directory")->required();
    train_cmd->add_option("--config", train_config, "Key-value training config")->required();
    train_cmd->add_option("--out", train_out, "Model file to write")->required();
    train_cmd->add_option("--mode", train_mode, "pair_only|adaptive_pair|quad_const|quad_learned")
        ->check(CLI::IsMember({"pair_only", "adaptive_pair", "quad_const", "quad_learned"}));
    train_cmd->add_option("--report", train_report, "Training report (default MODEL.report.json)");
    train_cmd->add_flag("--timing", train_timing, "Include wall-clock time in the report");

    auto* grad = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradient suite");
    std::uint64_t grad_seed = 1;
    double grad_tol = 1e-6;
    grad->add_option("--seed", grad_seed, "Seed for inputs and network");
    grad->add_option("--tol", grad_tol, "Relative tolerance of the 64-bit checks")->check(CLI::PositiveNumber);

    auto* track = app.add_subcommand("track", "Track one sequence from its first ground-truth box");
    std::string track_model;
    std::string track_seq;
    std::string track_out;
    std::string track_config;
    track->add_option("--model", track_model, "Model file")->required();
    track->add_option("--seq", track_seq, "Sequence directory")->required();
    track->add_option("--out", track_out, "Boxes file to write")->required();
    track->add_option("--config", track_config, "Config file with tracker.* keys");

    auto* eval = app.add_subcommand("eval", "Score a model or stored predictions");
    std::string eval_protocol;
    std::string eval_model;
    std::string eval_pred;
    std::string eval_data;
    std::string eval_out;
    std::string eval_config;
    bool eval_timing = false;
    eval->add_option("--protocol", eval_protocol, "ope|sre|tre")->required()->check(CLI::IsMember({"ope", "sre", "tre"}));
    auto* model_opt = eval->add_option("--model", eval_model, "Model file");
    auto* pred_opt = eval->add_option("--pred", eval_pred, "Boxes file, or directory of <sequence>.txt files");
    model_opt->excludes(pred_opt);
    eval->add_option("--data", eval_data, "Dataset or sequence directory")->required();
    eval->add_option("--out", eval_out, "Report file")->required();
    eval->add_option("--config", eval_config, "Config file with tracker.* keys");
    eval->add_flag("--timing", eval_timing, "Include throughput (fps) in the report");

    auto* ablate = app.add_subcommand("ablate", "Train all four modes and compare them with OPE");
    std::string ablate_data;
    std::string ablate_config;
    std::string ablate_out;
    bool ablate_timing = false;
    ablate->add_option("--data", ablate_data, "Directory with train/ and test/")->required();
    ablate->add_option("--config", ablate_config, "Key-value training config")->required();
    ablate->add_option("--out", ablate_out, "Report file")->required();
    ablate->add_flag("--timing", ablate_timing, "Include throughput in the report");

    if (argc <= 1) {
        std::cerr << app.help();
        return kUsage;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, std::cerr, std::cerr);
        return kUsage;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return kUsage;
    }

    try {
        if (synth->parsed()) {
            const SynthSpec spec = SynthSpec::from_config(KeyValueConfig::load(synth_spec));
            synth_generate(spec, synth_seed, synth_out);
        } else if (train_cmd->parsed()) {
            KeyValueConfig train_kv;
            KeyValueConfig tracker_kv;
            split_config(KeyValueConfig::load(train_config), train_kv, tracker_kv);
            if (!train_mode.empty()) train_kv.set("mode", train_mode);
            const TrainConfig cfg = TrainConfig::from_config(train_kv);
            const auto data = load_part(train_data, "train");
            const TrainResult r = train(data, cfg);
            save_model(r.net, train_out);
            const std::string report_path = train_report.empty() ? train_out + ".report.json" : train_report;
            write_text_file(report_path, format_train_report(r.report, train_timing));
            log::info("saved model to {} (best epoch {})", train_out, r.report.best_epoch);
        } else if (grad->parsed()) {
            GradcheckOptions opt;
            opt.seed = grad_seed;
            opt.tolerance64 = grad_tol;
            const auto checks = run_gradcheck(opt);
            std::cout << format_gradcheck_table(checks);
            if (!all_passed(checks)) {
                log::error("gradient check failed");
                return kNumerical;
            }
        } else if (track->parsed()) {
            const EmbedNet net = load_model(track_model);
            const TrackerConfig cfg = tracker_config(track_config);
            const Sequence seq = load_sequence(track_seq);
            if (seq.size() == 0) throw DataError("sequence has no frames");
            const auto boxes = model_tracker(net, cfg)(seq, 0, seq.boxes[0]);
            write_boxes(track_out, number_boxes(boxes));
        } else if (eval->parsed()) {
            const Protocol protocol = parse_protocol(eval_protocol);
            if (eval_model.empty() == eval_pred.empty()) throw UsageError("eval needs exactly one of --model or --pred");
            const auto data = load_part(eval_data, "test");
            std::vector<ReportEntry> entries;
            if (!eval_pred.empty()) {
                if (protocol != Protocol::ope) throw UsageError("stored predictions can only be scored with --protocol ope");
                std::vector<std::vector<BoundingBox>> preds;
                if (fs::is_directory(eval_pred)) {
                    for (const auto& s : data) preds.push_back(boxes_for(s, fs::path(eval_pred) / (s.name + ".txt")));
                } else {
                    if (data.size() != 1) throw UsageError("a single boxes file needs --data to be one sequence");
                    preds.push_back(boxes_for(data[0], eval_pred));
                }
                entries.push_back({fs::path(eval_pred).stem().string(), score_predictions(data, preds), {}});
            } else {
                const EmbedNet net = load_model(eval_model);
                EvalResult r = run_protocol(protocol, model_tracker(net, tracker_config(eval_config)), data, threads);
                log::info("{}: {} frames tracked at {:.1f} fps", eval_protocol, r.tracked_frames, r.fps());
                entries.push_back({fs::path(eval_model).stem().string(), std::move(r), {}});
            }
            write_report(eval_out, entries, eval_timing);
            const Curves& c = entries.front().result.aggregate;
            log::info("precision@20 {:.4f}  success@0.5 {:.4f}  AUC {:.4f}", c.precision_at_20, c.success_at_50,
                      c.auc);
        } else if (ablate->parsed()) {
            if (!fs::is_directory(fs::path(ablate_data) / "train") || !fs::is_directory(fs::path(ablate_data) / "test")) {
                throw DataError("ablate expects " + ablate_data + " to contain train/ and test/");
            }
            KeyValueConfig train_kv;
            KeyValueConfig tracker_kv;
            split_config(KeyValueConfig::load(ablate_config), train_kv, tracker_kv);
            const TrainConfig cfg = TrainConfig::from_config(train_kv);
            const auto entries = run_ablation(load_dataset(fs::path(ablate_data) / "train"),
                                              load_dataset(fs::path(ablate_data) / "test"), cfg,
                                              TrackerConfig::from_config(tracker_kv), threads);
            write_report(ablate_out, entries, ablate_timing);
        }
    } catch (const UsageError& e) {
        log::error("{}", e.what());
        return kUsage;
    } catch (const NumericalError& e) {
        log::error("numerical failure: {}", e.what());
        return kNumerical;
    } catch (const DataError& e) {
        log::error("data error: {}", e.what());
        return kData;
    } catch (const ShapeError& e) {
        log::error("invalid input: {}", e.what());
        return kData;
    } catch (const std::exception& e) {
        log::error("{}", e.what());
        return kData;
    }
    return kOk;
}
