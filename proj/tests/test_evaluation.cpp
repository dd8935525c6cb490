#include <gtest/gtest.h>

#include "instrec.hpp"

using namespace instrec;

namespace {

const std::vector<std::string> kA{"A"};

std::vector<ScoredFrame> two_frames() {
    return {{0.5, {true}, {true}}, {1.0, {true}, {false}}};
}

}  // namespace

TEST(GroundTruth, Parses) {
    const GroundTruth gt = load_ground_truth("instrument,start_s,end_s\nclarinet,0.0,2.5\n");
    ASSERT_EQ(gt.intervals.at("clarinet").size(), 1u);
    EXPECT_EQ(gt.intervals.at("clarinet")[0], (Interval{0.0, 2.5}));
}

TEST(GroundTruth, MergesOverlapsAndSorts) {
    const GroundTruth gt =
        load_ground_truth("instrument,start_s,end_s\ntrumpet,5,6\ntrumpet,0,2\ntrumpet,1,3\r\n\ntrumpet,3,4\n");
    EXPECT_EQ(gt.intervals.at("trumpet"), (std::vector<Interval>{{0, 4}, {5, 6}}));
}

TEST(GroundTruth, Rejections) {
    try {
        load_ground_truth("instrument,start_s,end_s\nclarinet,0,1\ntrombone,2,1\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    EXPECT_THROW(load_ground_truth("instrument,start_s,end_s\nx,-1,1\n"), ParseError);
    EXPECT_THROW(load_ground_truth("instrument,start_s,end_s,extra\nx,0,1,2\n"), ParseError);
    EXPECT_THROW(load_ground_truth("instrument,start_s,end_s\nx,0\n"), ParseError);
    EXPECT_THROW(load_ground_truth("instrument,start_s,end_s\nx,zero,1\n"), ParseError);
    EXPECT_THROW(load_ground_truth(""), ParseError);
}

TEST(FrameTruth, HalfOverlapRule) {
    const std::vector<Interval> iv{{0.0, 1.0}};
    EXPECT_TRUE(frame_present(iv, 0.98, 0.04));
    EXPECT_FALSE(frame_present(iv, 0.99, 0.04));
    EXPECT_TRUE(frame_present(iv, 0.3, 0.04));
    EXPECT_FALSE(frame_present(iv, 1.5, 0.04));
    GroundTruth gt;
    gt.intervals["A"] = iv;
    const std::vector<std::string> names{"A", "B"};
    EXPECT_EQ(frame_truth(gt, names, 0.5, 0.04), (std::vector<bool>{true, false}));
}

TEST(Scores, TwoFrameFixture) {
    const auto frames = two_frames();
    const EvalReport r = rms_weighted_scores(frames, kA);
    const auto& s = r.instruments[0];
    EXPECT_EQ(s.true_positive, 0.5);
    EXPECT_EQ(s.precision, 1.0);
    EXPECT_EQ(s.recall, 0.5 / 1.5);
    EXPECT_EQ(s.f_score, 2.0 * 1.0 * (0.5 / 1.5) / (1.0 + 0.5 / 1.5));
    EXPECT_NEAR(s.f_score, 0.5, 1e-15);
    EXPECT_EQ(r.aggregate.f_score, s.f_score);
}

TEST(Scores, PerfectPrediction) {
    const std::vector<std::string> names{"A", "B"};
    const std::vector<ScoredFrame> frames{{0.2, {true, false}, {true, false}}, {0.7, {false, true}, {false, true}}};
    const EvalReport r = rms_weighted_scores(frames, names);
    for (const auto& s : r.instruments) {
        EXPECT_EQ(s.precision, 1.0);
        EXPECT_EQ(s.recall, 1.0);
        EXPECT_EQ(s.f_score, 1.0);
    }
    EXPECT_EQ(r.aggregate.f_score, 1.0);
}

TEST(Scores, DisjointAndUndefined) {
    const std::vector<std::string> names{"A", "B"};
    const std::vector<ScoredFrame> frames{{0.2, {true, false}, {false, false}}, {0.7, {false, false}, {true, false}}};
    const EvalReport r = rms_weighted_scores(frames, names);
    EXPECT_EQ(r.instruments[0].precision, 0.0);
    EXPECT_EQ(r.instruments[0].recall, 0.0);
    EXPECT_EQ(r.instruments[0].f_score, 0.0);
    EXPECT_FALSE(r.instruments[0].precision_undefined);
    EXPECT_TRUE(r.instruments[1].precision_undefined);
    EXPECT_TRUE(r.instruments[1].recall_undefined);
    EXPECT_EQ(r.instruments[1].f_score, 0.0);
    EXPECT_NE(eval_report_table(r).find("zero denominator"), std::string::npos);
}

TEST(Scores, ScaleInvariantAndBounded) {
    Engine rng(3);
    const std::vector<std::string> names{"A", "B", "C"};
    std::vector<ScoredFrame> frames(200);
    for (auto& f : frames) {
        f.rms = uniform_unit(rng);
        for (int i = 0; i < 3; ++i) {
            f.truth.push_back(uniform_unit(rng) < 0.5);
            f.predicted.push_back(uniform_unit(rng) < 0.5);
        }
    }
    const EvalReport a = rms_weighted_scores(frames, names);
    for (auto& f : frames) f.rms *= 37.5;
    const EvalReport b = rms_weighted_scores(frames, names);
    double lo = 1.0, hi = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& s = a.instruments[i];
        EXPECT_NEAR(s.precision, b.instruments[i].precision, 1e-12);
        EXPECT_NEAR(s.recall, b.instruments[i].recall, 1e-12);
        EXPECT_NEAR(s.f_score, b.instruments[i].f_score, 1e-12);
        EXPECT_LE(s.f_score, std::max(s.precision, s.recall));
        EXPECT_GE(s.f_score, std::min(s.precision, s.recall));
        lo = std::min(lo, s.precision);
        hi = std::max(hi, s.precision);
    }
    EXPECT_GE(a.aggregate.precision, lo);
    EXPECT_LE(a.aggregate.precision, hi);
}

TEST(Scores, MismatchedLabels) {
    const std::vector<ScoredFrame> frames{{0.2, {true, false}, {true}}};
    EXPECT_THROW(rms_weighted_scores(frames, std::vector<std::string>{"A", "B"}), DimensionError);
}

TEST(Bench, TableThreeNumbers) {
    const BenchReport b = make_bench_report(5.7, 17.6, 139.95);
    EXPECT_NEAR(b.speedup, 3.09, 0.005);
    EXPECT_NEAR(b.ferns_realtime_factor, 24.6, 0.05);
    EXPECT_NEAR(b.forest_realtime_factor, 7.95, 0.005);
    EXPECT_THROW(make_bench_report(0.0, 1.0, 1.0), InvalidArgumentError);
}

TEST(Bench, SelfComparisonAndMismatch) {
    const auto sources = synth::make_sources(synth::default_instruments(), 1, 44100, 2);
    BatteryOptions o;
    o.spec.positives = o.spec.negatives = 30;
    o.spec.engine.ferns = 500;
    const std::vector<std::string> targets{"clarinet", "trumpet"};
    const BatteryModel m = train_battery(targets, sources, o, 1);
    const auto rows = extract_feature_matrix(synth::render_piece(synth::default_instruments(), 10.0, 44100, 3).audio,
                                             FrameSpec{});
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.values.begin(), r.values.end());
    const BenchReport b = benchmark_engines(m, m, flat, 10.0, 9);
    EXPECT_EQ(b.frames, rows.size());
    EXPECT_EQ(b.repeats, 9u);
    EXPECT_GT(b.speedup, 0.8);
    EXPECT_LT(b.speedup, 1.25);

    const BatteryModel other = train_battery(std::vector<std::string>{"clarinet"}, sources, o, 1);
    EXPECT_THROW(benchmark_engines(m, other, flat, 3.0), InvalidArgumentError);
    EXPECT_THROW(benchmark_engines(m, m, std::span<const double>{}, 3.0), InvalidArgumentError);
    EXPECT_NE(bench_report_csv(b).find("speedup"), std::string::npos);
}
