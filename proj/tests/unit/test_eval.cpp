#include <gtest/gtest.h>

#include <algorithm>
#include <mutex>

#include "quadtrack/error.hpp"
#include "quadtrack/eval.hpp"
#include "quadtrack/random.hpp"
#include "quadtrack/report.hpp"

using namespace quadtrack;

namespace {

Sequence moving_sequence(const std::string& name, std::size_t frames, double speed = 1.5) {
    Sequence s;
    s.name = name;
    for (std::size_t i = 0; i < frames; ++i) {
        s.frames.emplace_back(1, 3, 60, 80, 0.5f);
        s.boxes.push_back({10.0 + speed * static_cast<double>(i), 12.0, 14.0, 16.0});
    }
    return s;
}

BoundingBox random_box(Rng& rng) {
    return {uniform(rng, 0.0, 100.0), uniform(rng, 0.0, 100.0), uniform(rng, 1.0, 40.0), uniform(rng, 1.0, 40.0)};
}

// Counting oracle: sorts the per-frame values once and reads each threshold off with a binary search.
Curves sorted_oracle(const std::vector<BoundingBox>& pred, const std::vector<BoundingBox>& gt) {
    std::vector<double> errs, ious;
    for (std::size_t f = 0; f < gt.size(); ++f) {
        errs.push_back(center_error(pred[f], gt[f]));
        ious.push_back(iou(pred[f], gt[f]));
    }
    std::sort(errs.begin(), errs.end());
    std::sort(ious.begin(), ious.end());
    const auto n = static_cast<double>(gt.size());
    Curves c;
    for (std::size_t i = 0; i < kPrecisionThresholds; ++i) {
        const auto k = std::upper_bound(errs.begin(), errs.end(), static_cast<double>(i)) - errs.begin();
        c.precision.push_back(static_cast<double>(k) / n);
    }
    for (std::size_t i = 0; i < kSuccessThresholds; ++i) {
        auto k = ious.end() - std::upper_bound(ious.begin(), ious.end(), static_cast<double>(i) / 20.0);
        if (i + 1 == kSuccessThresholds) k = std::count(ious.begin(), ious.end(), 1.0);
        c.success.push_back(static_cast<double>(k) / n);
    }
    return c;
}

}  // namespace

TEST(Metrics, Iou) {
    const BoundingBox a{0, 0, 2, 2};
    EXPECT_EQ(iou(a, a), 1.0);
    EXPECT_EQ(iou(a, {5, 5, 2, 2}), 0.0);
    EXPECT_EQ(iou(a, {2, 0, 2, 2}), 0.0);  // touching edges
    EXPECT_NEAR(iou(a, {1, 1, 2, 2}), 1.0 / 7.0, 1e-15);
    EXPECT_EQ(iou(a, {1, 1, 2, 2}), iou({1, 1, 2, 2}, a));
}

TEST(Metrics, CenterError) {
    EXPECT_EQ(center_error({3, 3, 2, 2}, {3, 3, 2, 2}), 0.0);
    EXPECT_EQ(center_error({-1, -1, 2, 2}, {2, 3, 2, 2}), 5.0);
    EXPECT_EQ(center_error({2, 3, 2, 2}, {-1, -1, 2, 2}), 5.0);
}

TEST(Curves, PerfectPrediction) {
    const std::vector<BoundingBox> gt{{0, 0, 10, 10}, {3, 4, 10, 12}, {7, 1, 5, 5}};
    const Curves c = curves(gt, gt);
    for (double v : c.precision) EXPECT_EQ(v, 1.0);
    for (double v : c.success) EXPECT_EQ(v, 1.0);
    EXPECT_EQ(c.precision_at_20, 1.0);
    EXPECT_EQ(c.success_at_50, 1.0);
    EXPECT_EQ(c.auc, 1.0);
    EXPECT_EQ(c.mean_iou, 1.0);
}

TEST(Curves, FarDisjointPredictionsAreZero) {
    const std::vector<BoundingBox> gt{{0, 0, 10, 10}, {0, 0, 10, 10}};
    const std::vector<BoundingBox> pred{{200, 0, 10, 10}, {0, 300, 10, 10}};
    const Curves c = curves(pred, gt);
    for (double v : c.precision) EXPECT_EQ(v, 0.0);
    for (double v : c.success) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(c.auc, 0.0);
}

TEST(Curves, HalfRight) {
    const std::vector<BoundingBox> gt{{0, 0, 10, 10}, {0, 0, 10, 10}};
    const std::vector<BoundingBox> pred{{0, 0, 10, 10}, {100, 100, 10, 10}};
    const Curves c = curves(pred, gt);
    EXPECT_EQ(c.precision_at_20, 0.5);
    EXPECT_EQ(c.success_at_50, 0.5);
    EXPECT_EQ(c.auc, 0.5);
}

TEST(Curves, FourFrameHandCount) {
    const std::vector<BoundingBox> gt(4, BoundingBox{0, 0, 10, 10});
    // errors 0, 5, 30, sqrt(50); IoUs 1, 1/3, 0, 1/4
    const std::vector<BoundingBox> pred{{0, 0, 10, 10}, {5, 0, 10, 10}, {30, 0, 10, 10}, {0, 0, 20, 20}};
    const Curves c = curves(pred, gt);
    EXPECT_EQ(c.precision_at_20, 0.75);
    EXPECT_EQ(c.precision[4], 0.25);
    EXPECT_EQ(c.precision[5], 0.5);
    EXPECT_EQ(c.precision[7], 0.5);
    EXPECT_EQ(c.precision[8], 0.75);
    EXPECT_EQ(c.precision[30], 1.0);
    EXPECT_EQ(c.success_at_50, 0.25);
    EXPECT_EQ(c.success[5], 0.5);  // 0.25 is not strictly above 0.25
    EXPECT_EQ(c.success[6], 0.5);
    EXPECT_EQ(c.success[7], 0.25);
    EXPECT_EQ(c.success[20], 0.25);
    // 21 + 7 + 0 + 5 threshold hits over 4 frames and 21 thresholds.
    EXPECT_EQ(c.auc, 33.0 / 84.0);
}

TEST(Curves, RejectsMismatchAndEmpty) {
    const std::vector<BoundingBox> one{{0, 0, 1, 1}};
    EXPECT_THROW(curves(one, {}), ShapeError);
    EXPECT_THROW(curves(std::vector<BoundingBox>{}, std::vector<BoundingBox>{}), ShapeError);
}

TEST(Curves, MonotoneAndMatchesSortedOracle) {
    Rng rng(42);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 30);
        std::vector<BoundingBox> gt, pred;
        for (std::size_t i = 0; i < n; ++i) {
            gt.push_back(random_box(rng));
            // Half the predictions are perturbations of the ground truth, so overlaps are common.
            pred.push_back(uniform_index(rng, 2) == 0 ? random_box(rng)
                                                      : BoundingBox{gt.back().x + uniform(rng, -8.0, 8.0),
                                                                    gt.back().y + uniform(rng, -8.0, 8.0),
                                                                    gt.back().w * uniform(rng, 0.7, 1.3),
                                                                    gt.back().h * uniform(rng, 0.7, 1.3)});
        }
        const Curves c = curves(pred, gt);
        const Curves o = sorted_oracle(pred, gt);
        ASSERT_EQ(c.precision, o.precision);
        ASSERT_EQ(c.success, o.success);
        for (std::size_t i = 1; i < c.precision.size(); ++i) ASSERT_GE(c.precision[i], c.precision[i - 1]);
        for (std::size_t i = 1; i < c.success.size(); ++i) ASSERT_LE(c.success[i], c.success[i - 1]);
        ASSERT_GE(c.auc, 0.0);
        ASSERT_LE(c.auc, 1.0);
    }
}

TEST(Protocols, OracleTrackerScoresPerfectly) {
    const std::vector<Sequence> seqs{moving_sequence("a", 12), moving_sequence("b", 7, -0.5)};
    for (Protocol p : {Protocol::ope, Protocol::sre, Protocol::tre}) {
        const EvalResult r = run_protocol(p, oracle_tracker(), seqs);
        EXPECT_EQ(r.aggregate.precision_at_20, 1.0) << to_string(p);
        EXPECT_EQ(r.aggregate.success_at_50, 1.0) << to_string(p);
        EXPECT_EQ(r.aggregate.auc, 1.0) << to_string(p);
        EXPECT_EQ(r.aggregate.mean_iou, 1.0) << to_string(p);
    }
    const Curves sre = run_sre(oracle_tracker(), seqs).aggregate;
    const Curves ope = run_ope(oracle_tracker(), seqs).aggregate;
    EXPECT_EQ(sre.precision, ope.precision);
    EXPECT_EQ(sre.success, ope.success);
    EXPECT_EQ(sre.frames, 12 * ope.frames);
}

TEST(Protocols, SreRunsTwelveInitializations) {
    const std::vector<Sequence> seqs{moving_sequence("a", 5)};
    std::vector<BoundingBox> inits;
    TrackFn spy = [&](const Sequence& s, std::size_t start, const BoundingBox& init) {
        inits.push_back(init);
        return std::vector<BoundingBox>(s.size() - start, init);
    };
    const EvalResult r = run_sre(spy, seqs);
    EXPECT_EQ(r.sequences[0].runs, 12u);
    ASSERT_EQ(inits.size(), 12u);
    const BoundingBox& g = seqs[0].boxes[0];
    EXPECT_DOUBLE_EQ(inits[0].x, g.x - 0.1 * g.w);
    EXPECT_DOUBLE_EQ(inits[1].x, g.x + 0.1 * g.w);
    EXPECT_DOUBLE_EQ(inits[3].y, g.y + 0.1 * g.h);
    EXPECT_DOUBLE_EQ(inits[8].w, 0.8 * g.w);
    EXPECT_DOUBLE_EQ(inits[11].h, 1.2 * g.h);
    EXPECT_DOUBLE_EQ(inits[11].cx(), g.cx());
}

TEST(Protocols, SreBoxesAreClampedIntoFrame) {
    for (const auto& b : sre_boxes({0, 0, 30, 30}, 32, 32)) {
        EXPECT_GE(b.x, 0.0);
        EXPECT_GE(b.y, 0.0);
        EXPECT_LE(b.x + b.w, 32.0);
        EXPECT_LE(b.y + b.h, 32.0);
    }
}

TEST(Protocols, TreTwentyFrameSegments) {
    const auto starts = tre_starts(20);
    ASSERT_EQ(starts.size(), 20u);
    for (std::size_t k = 0; k < 20; ++k) EXPECT_EQ(starts[k], k);
    EXPECT_EQ(tre_starts(40)[1], 2u);
    EXPECT_EQ(tre_starts(5).size(), 5u);

    std::vector<std::size_t> lengths;
    TrackFn spy = [&](const Sequence& s, std::size_t start, const BoundingBox& init) {
        lengths.push_back(s.size() - start);
        return std::vector<BoundingBox>(s.size() - start, init);
    };
    const EvalResult r = run_tre(spy, {moving_sequence("a", 20)});
    EXPECT_EQ(r.sequences[0].runs, 20u);
    ASSERT_EQ(lengths.size(), 20u);
    for (std::size_t k = 0; k < 20; ++k) EXPECT_EQ(lengths[k], 20 - k);
}

TEST(Protocols, SingleSequenceAggregateEqualsSequence) {
    const EvalResult r = run_ope(static_tracker(), {moving_sequence("a", 15)});
    EXPECT_EQ(r.aggregate, r.sequences[0].curves);
    EXPECT_EQ(r.tracked_frames, 14u);
}

TEST(Protocols, ThreadsDoNotChangeResults) {
    std::vector<Sequence> seqs;
    for (int i = 0; i < 7; ++i) seqs.push_back(moving_sequence("s" + std::to_string(i), 10 + i, 0.5 * i));
    for (Protocol p : {Protocol::ope, Protocol::sre, Protocol::tre}) {
        const EvalResult one = run_protocol(p, static_tracker(), seqs, 1);
        const EvalResult many = run_protocol(p, static_tracker(), seqs, 4);
        EXPECT_EQ(one.aggregate, many.aggregate);
        for (std::size_t i = 0; i < seqs.size(); ++i) EXPECT_EQ(one.sequences[i].name, many.sequences[i].name);
    }
}

TEST(Protocols, ErrorsPropagate) {
    TrackFn broken = [](const Sequence&, std::size_t, const BoundingBox&) { return std::vector<BoundingBox>{}; };
    EXPECT_THROW(run_ope(broken, {moving_sequence("a", 3)}), ShapeError);
    EXPECT_THROW(run_ope(static_tracker(), {}), DataError);
    EXPECT_THROW(parse_protocol("xyz"), ShapeError);
}

TEST(ScorePredictions, MatchesOpeOfSameBoxes) {
    const std::vector<Sequence> seqs{moving_sequence("a", 9), moving_sequence("b", 4, 3.0)};
    std::vector<std::vector<BoundingBox>> preds;
    for (const auto& s : seqs) preds.emplace_back(s.size(), s.boxes[0]);
    EXPECT_EQ(score_predictions(seqs, preds).aggregate, run_ope(static_tracker(), seqs).aggregate);
    preds[1].pop_back();
    EXPECT_THROW(score_predictions(seqs, preds), DataError);
    EXPECT_THROW(score_predictions(seqs, {}), DataError);
}

TEST(AverageCurves, IdenticalPartsAverageExactly) {
    Rng rng(3);
    std::vector<BoundingBox> gt, pred;
    for (int i = 0; i < 7; ++i) {
        gt.push_back(random_box(rng));
        pred.push_back(random_box(rng));
    }
    const Curves c = curves(pred, gt);
    const std::vector<Curves> parts(5, c);
    Curves avg = average_curves(parts, std::vector<double>{1, 2, 3, 4, 5});
    EXPECT_EQ(avg.precision, c.precision);
    EXPECT_EQ(avg.auc, c.auc);
    EXPECT_EQ(avg.frames, 35u);
}

TEST(Report, RoundTripAndHeadlines) {
    std::vector<ReportEntry> entries;
    const std::vector<Sequence> seqs{moving_sequence("a", 9), moving_sequence("b", 6, 4.0)};
    for (const char* name : {"pair_only", "adaptive_pair", "quad_const", "quad_learned"}) {
        entries.push_back({name, run_ope(static_tracker(), seqs), {}});
    }
    entries.push_back({"oracle", run_ope(oracle_tracker(), seqs), R"({"summary": {"mode": "x"}})"});
    entries.back().result.seconds = 2.0;
    const std::string text = format_report(entries);
    for (const char* key : {"\"precision@20\"", "\"success@0.5\"", "\"auc\""})
        EXPECT_NE(text.find(key), std::string::npos);
    EXPECT_EQ(text.find("throughput"), std::string::npos);

    const ParsedReport parsed = parse_report(text);
    ASSERT_EQ(parsed.entries.size(), 5u);
    EXPECT_EQ(parsed.entry("quad_learned").aggregate, entries[3].result.aggregate);
    EXPECT_EQ(parsed.entry("oracle").sequences[1].curves, entries[4].result.sequences[1].curves);
    EXPECT_EQ(parsed.ranking.front(), "oracle");
    EXPECT_EQ(parsed.entry("oracle").fps, 0.0);
    EXPECT_THROW(parsed.entry("nope"), DataError);

    ReportOptions opt;
    opt.include_timing = true;
    const ParsedReport timed = parse_report(format_report(entries, opt));
    EXPECT_EQ(timed.entry("oracle").fps, entries[4].result.fps());
    EXPECT_THROW(parse_report("{\"entries\": 3}"), DataError);
    EXPECT_THROW(parse_report("not json"), DataError);
}
