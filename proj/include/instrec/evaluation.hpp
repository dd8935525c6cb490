#pragma once

// RMS-weighted scoring of frame annotations, and inference timing.
//
// For instrument i, T_p(i) is the summed RMS of frames both annotated and
// predicted as i; precision divides it by the RMS mass of frames predicted
// as i, recall by the mass of frames annotated as i. The aggregate row
// micro-averages: it sums the three masses over instruments first.

#include <cctype>
#include <cstdio>
#include <limits>
#include <span>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "instrec/battery.hpp"
#include "instrec/error.hpp"

namespace instrec {

struct Interval {
    double start_s = 0.0;
    double end_s = 0.0;

    bool operator==(const Interval&) const = default;
};

/// Presence intervals per instrument, sorted and non-overlapping.
struct GroundTruth {
    std::map<std::string, std::vector<Interval>> intervals;

    std::vector<std::string> instruments() const {
        std::vector<std::string> out;
        for (const auto& [name, _] : intervals) out.push_back(name);
        return out;
    }
};

namespace detail {

inline std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline double parse_number(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line) + ": '" + s + "' is not a number");
    }
}

}  // namespace detail

/// Parses `instrument,start_s,end_s` rows (header required) and merges the
/// overlapping or touching intervals of each instrument.
inline GroundTruth load_ground_truth(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    GroundTruth gt;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (!header) {
            if (cells != std::vector<std::string>{"instrument", "start_s", "end_s"})
                throw ParseError("line " + std::to_string(line_no) + ": expected header 'instrument,start_s,end_s'");
            header = true;
            continue;
        }
        if (cells.size() != 3)
            throw ParseError("line " + std::to_string(line_no) + ": expected 3 columns, got " +
                             std::to_string(cells.size()));
        if (cells[0].empty()) throw ParseError("line " + std::to_string(line_no) + ": empty instrument name");
        const double start = detail::parse_number(cells[1], line_no);
        const double end = detail::parse_number(cells[2], line_no);
        if (start < 0.0 || end <= start)
            throw ParseError("line " + std::to_string(line_no) + ": interval [" + cells[1] + ", " + cells[2] +
                             ") is negative or inverted");
        gt.intervals[cells[0]].push_back({start, end});
    }
    if (!header) throw ParseError("ground truth is empty; expected header 'instrument,start_s,end_s'");

    for (auto& [_, list] : gt.intervals) {
        std::sort(list.begin(), list.end(), [](const Interval& a, const Interval& b) {
            return a.start_s < b.start_s || (a.start_s == b.start_s && a.end_s < b.end_s);
        });
        std::vector<Interval> merged;
        for (const auto& iv : list) {
            if (!merged.empty() && iv.start_s <= merged.back().end_s)
                merged.back().end_s = std::max(merged.back().end_s, iv.end_s);
            else
                merged.push_back(iv);
        }
        list = std::move(merged);
    }
    return gt;
}

/// An instrument is present in a frame when its intervals cover at least
/// half of the frame.
inline bool frame_present(const std::vector<Interval>& intervals, double frame_start_s, double frame_len_s) {
    const double frame_end = frame_start_s + frame_len_s;
    double covered = 0.0;
    for (const auto& iv : intervals) covered += std::max(0.0, std::min(iv.end_s, frame_end) - std::max(iv.start_s, frame_start_s));
    return covered >= 0.5 * frame_len_s - 1e-12 * std::max(1.0, frame_len_s);
}

inline std::vector<bool> frame_truth(const GroundTruth& gt, std::span<const std::string> instruments,
                                     double frame_start_s, double frame_len_s) {
    std::vector<bool> out;
    for (const auto& name : instruments) {
        const auto it = gt.intervals.find(name);
        out.push_back(it != gt.intervals.end() && frame_present(it->second, frame_start_s, frame_len_s));
    }
    return out;
}

struct ScoredFrame {
    double rms = 0.0;
    std::vector<bool> truth;
    std::vector<bool> predicted;
};

struct InstrumentScore {
    std::string label;
    double true_positive = 0.0;
    double predicted_mass = 0.0;
    double annotated_mass = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
    /// Set when the corresponding denominator was zero (score reported as 0).
    bool precision_undefined = false;
    bool recall_undefined = false;
};

struct EvalReport {
    std::vector<InstrumentScore> instruments;
    InstrumentScore aggregate;
};

namespace detail {

inline void finish_score(InstrumentScore& s) {
    s.precision_undefined = !(s.predicted_mass > 0.0);
    s.recall_undefined = !(s.annotated_mass > 0.0);
    s.precision = s.precision_undefined ? 0.0 : s.true_positive / s.predicted_mass;
    s.recall = s.recall_undefined ? 0.0 : s.true_positive / s.annotated_mass;
    s.f_score = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
}

}  // namespace detail

inline EvalReport rms_weighted_scores(std::span<const ScoredFrame> frames, std::span<const std::string> instruments) {
    EvalReport report;
    report.aggregate.label = "micro";
    for (std::size_t i = 0; i < instruments.size(); ++i) {
        InstrumentScore s;
        s.label = instruments[i];
        for (const auto& f : frames) {
            if (f.truth.size() != instruments.size() || f.predicted.size() != instruments.size())
                throw DimensionError("frame label vectors do not match the instrument list");
            if (f.predicted[i]) s.predicted_mass += f.rms;
            if (f.truth[i]) s.annotated_mass += f.rms;
            if (f.predicted[i] && f.truth[i]) s.true_positive += f.rms;
        }
        detail::finish_score(s);
        report.aggregate.true_positive += s.true_positive;
        report.aggregate.predicted_mass += s.predicted_mass;
        report.aggregate.annotated_mass += s.annotated_mass;
        report.instruments.push_back(std::move(s));
    }
    detail::finish_score(report.aggregate);
    return report;
}

inline std::string eval_report_csv(const EvalReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "instrument,true_positive,predicted_mass,annotated_mass,precision,recall,f_score,precision_undefined,"
           "recall_undefined\n";
    auto row = [&](const InstrumentScore& s) {
        out << s.label << ',' << s.true_positive << ',' << s.predicted_mass << ',' << s.annotated_mass << ','
            << s.precision << ',' << s.recall << ',' << s.f_score << ',' << int(s.precision_undefined) << ','
            << int(s.recall_undefined) << '\n';
    };
    for (const auto& s : r.instruments) row(s);
    row(r.aggregate);
    return out.str();
}

inline std::string eval_report_table(const EvalReport& r) {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s %10s %10s %10s\n", "instrument", "precision", "recall", "f-score");
    out << buf;
    auto row = [&](const InstrumentScore& s) {
        std::snprintf(buf, sizeof buf, "%-16s %9.2f%%%s %8.2f%%%s %9.2f%%\n", s.label.c_str(), 100 * s.precision,
                      s.precision_undefined ? "*" : " ", 100 * s.recall, s.recall_undefined ? "*" : " ",
                      100 * s.f_score);
        out << buf;
    };
    for (const auto& s : r.instruments) row(s);
    row(r.aggregate);
    if (std::any_of(r.instruments.begin(), r.instruments.end(),
                    [](const auto& s) { return s.precision_undefined || s.recall_undefined; }))
        out << "* zero denominator, reported as 0\n";
    return out.str();
}

struct BenchReport {
    double ferns_s = 0.0;
    double forest_s = 0.0;
    double audio_duration_s = 0.0;
    double ferns_realtime_factor = 0.0;
    double forest_realtime_factor = 0.0;
    /// forest time / ferns time: how many times faster the ferns battery is.
    double speedup = 0.0;
    std::size_t frames = 0;
    std::size_t repeats = 0;
};

inline BenchReport make_bench_report(double ferns_s, double forest_s, double audio_duration_s) {
    if (!(ferns_s > 0.0) || !(forest_s > 0.0)) throw InvalidArgumentError("timings must be positive");
    BenchReport b;
    b.ferns_s = ferns_s;
    b.forest_s = forest_s;
    b.audio_duration_s = audio_duration_s;
    b.ferns_realtime_factor = audio_duration_s / ferns_s;
    b.forest_realtime_factor = audio_duration_s / forest_s;
    b.speedup = forest_s / ferns_s;
    return b;
}

/// Best-of-`repeats` wall time of classifying `rows` (row-major feature
/// vectors) with every classifier of `model`. Feature extraction excluded.
inline double time_inference(const BatteryModel& model, std::span<const double> rows, std::size_t repeats = 3) {
    double best = std::numeric_limits<double>::infinity();
    volatile double sink = 0.0;
    for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto probs = classify_rows(model, rows);
        const auto t1 = std::chrono::steady_clock::now();
        sink = sink + (probs.empty() || probs.front().empty() ? 0.0 : probs.front().front());
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return std::max(best, 1e-9);
}

inline BenchReport benchmark_engines(const BatteryModel& ferns_model, const BatteryModel& forest_model,
                                     std::span<const double> rows, double audio_duration_s, std::size_t repeats = 3) {
    if (ferns_model.target_labels() != forest_model.target_labels())
        throw InvalidArgumentError("the two batteries cover different targets");
    if (rows.empty() || rows.size() % kFeatureCount != 0)
        throw InvalidArgumentError("feature matrix is empty or not a whole number of rows");
    BenchReport b = make_bench_report(time_inference(ferns_model, rows, repeats),
                                      time_inference(forest_model, rows, repeats), audio_duration_s);
    b.frames = rows.size() / kFeatureCount;
    b.repeats = repeats;
    return b;
}

inline std::string bench_report_table(const BenchReport& b) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "frames            %zu\n"
                  "repeats           %zu (best of)\n"
                  "audio duration    %.3f s\n"
                  "ferns             %.6f s  (%.1fx real time)\n"
                  "forest            %.6f s  (%.1fx real time)\n"
                  "ferns speed-up    %.2fx\n",
                  b.frames, b.repeats, b.audio_duration_s, b.ferns_s, b.ferns_realtime_factor, b.forest_s,
                  b.forest_realtime_factor, b.speedup);
    return buf;
}

inline std::string bench_report_csv(const BenchReport& b) {
    std::ostringstream out;
    out.precision(17);
    out << "frames,repeats,audio_duration_s,ferns_s,forest_s,ferns_realtime_factor,forest_realtime_factor,speedup\n"
        << b.frames << ',' << b.repeats << ',' << b.audio_duration_s << ',' << b.ferns_s << ',' << b.forest_s << ','
        << b.ferns_realtime_factor << ',' << b.forest_realtime_factor << ',' << b.speedup << '\n';
    return out.str();
}

}  // namespace instrec
