// instrec: synthesize sources, train instrument batteries, annotate audio,
// score annotations and time the two ensemble engines.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "instrec.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace instrec;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void print_config(const std::string& command, const std::vector<std::pair<std::string, std::string>>& items,
                  std::ostream& os = std::cout) {
    os << "config " << command << ':';
    for (const auto& [k, v] : items) os << ' ' << k << '=' << v;
    os << '\n';
}

void write_text(const std::string& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::string& path) {
    const Bytes b = read_file(path);
    return std::string(b.begin(), b.end());
}

MonoSignal load_mono(const std::string& path) { return mixdown_mono(load_wav(path)); }

struct SynthOptions {
    std::string out_dir;
    std::uint64_t seed = 1;
    std::size_t clips = 8;
    std::uint32_t rate = 44100;
    double piece_s = 60.0;
};

int cmd_synth(const SynthOptions& o) {
    print_config("synth", {{"out", o.out_dir},
                           {"seed", std::to_string(o.seed)},
                           {"clips", std::to_string(o.clips)},
                           {"rate", std::to_string(o.rate)},
                           {"piece_seconds", fmt_double(o.piece_s)}});
    const auto defs = synth::default_instruments();
    fs::create_directories(o.out_dir);
    json manifest;
    manifest["sample_rate"] = o.rate;
    manifest["seed"] = o.seed;
    manifest["instruments"] = json::array();
    for (const auto& def : defs) {
        const auto clips = synth::render_clips(def, o.clips, o.rate, o.seed);
        fs::create_directories(fs::path(o.out_dir) / def.label);
        json files = json::array();
        for (std::size_t i = 0; i < clips.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof name, "%s_%02zu.wav", def.label.c_str(), i);
            const std::string rel = (fs::path(def.label) / name).string();
            write_file((fs::path(o.out_dir) / rel).string(), encode_wav(AudioClip{{clips[i].samples}, o.rate}));
            files.push_back(rel);
        }
        manifest["instruments"].push_back({{"label", def.label}, {"role", to_string(def.role)}, {"files", files}});
    }
    if (o.piece_s > 0) {
        const auto piece = synth::render_piece(defs, o.piece_s, o.rate, o.seed ^ 0x5EEDu);
        write_file((fs::path(o.out_dir) / "piece.wav").string(), encode_wav(AudioClip{{piece.audio.samples}, o.rate}));
        write_text((fs::path(o.out_dir) / "piece_truth.csv").string(), synth::ground_truth_csv(piece.truth));
        manifest["piece"] = {{"audio", "piece.wav"}, {"truth", "piece_truth.csv"}, {"seconds", o.piece_s}};
    }
    write_text((fs::path(o.out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
    std::cout << "wrote " << defs.size() << " instruments to " << o.out_dir << '\n';
    return 0;
}

struct LoadedManifest {
    std::vector<InstrumentSource> sources;
    std::vector<std::string> targets;
};

LoadedManifest load_manifest(const std::string& path) {
    json m;
    try {
        m = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw ParseError("manifest '" + path + "': " + e.what());
    }
    if (!m.contains("instruments") || !m["instruments"].is_array())
        throw ParseError("manifest '" + path + "' has no instruments array");
    const fs::path base = fs::path(path).parent_path();
    LoadedManifest out;
    for (const auto& inst : m["instruments"]) {
        const std::string label = inst.at("label").get<std::string>();
        const std::string role = inst.value("role", std::string("target"));
        if (role != "target" && role != "accompanying")
            throw ParseError("instrument '" + label + "' has unknown role '" + role + "'");
        std::vector<MonoSignal> raw;
        for (const auto& f : inst.at("files")) raw.push_back(load_mono((base / f.get<std::string>()).string()));
        if (raw.empty()) throw InvalidArgumentError("instrument '" + label + "' lists no files");
        const SourceRole r = role == "target" ? SourceRole::Target : SourceRole::Accompanying;
        out.sources.push_back(prepare_source(label, raw, r));
        if (r == SourceRole::Target) out.targets.push_back(label);
    }
    return out;
}

struct TrainOptions {
    std::string manifest;
    std::string out;
    std::string engine = "ferns";
    std::uint32_t depth = 10;
    std::uint32_t ferns = 1000;
    std::uint32_t trees = 1000;
    std::uint32_t k = 0;
    std::size_t positives = 3000;
    std::size_t negatives = 3000;
    double threshold = 0.5;
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

int cmd_train(const TrainOptions& o) {
    const unsigned threads = o.threads ? o.threads : hardware_threads();
    const std::uint32_t k = o.k ? o.k : default_k(kFeatureCount);
    print_config("train", {{"manifest", o.manifest},
                           {"out", o.out},
                           {"engine", o.engine},
                           {"depth", std::to_string(o.depth)},
                           {"ferns", std::to_string(o.ferns)},
                           {"trees", std::to_string(o.trees)},
                           {"k", std::to_string(k)},
                           {"positives", std::to_string(o.positives)},
                           {"negatives", std::to_string(o.negatives)},
                           {"threshold", fmt_double(o.threshold)},
                           {"seed", std::to_string(o.seed)},
                           {"threads", std::to_string(threads)}});
    const auto t0 = Clock::now();
    const auto manifest = load_manifest(o.manifest);
    if (manifest.targets.empty()) throw InvalidArgumentError("manifest declares no target instruments");

    BatteryOptions opts;
    opts.spec.positives = o.positives;
    opts.spec.negatives = o.negatives;
    opts.spec.engine = {o.engine == "ferns" ? EngineKind::Ferns : EngineKind::Forest, o.depth, o.ferns, o.trees, k};
    opts.frame.sample_rate = manifest.sources.front().clips.front().sample_rate;
    opts.threshold = o.threshold;
    opts.threads = threads;

    BatteryModel model = train_battery(manifest.targets, manifest.sources, opts, o.seed);
    json meta = {{"engine", o.engine},    {"depth", o.depth},         {"ferns", o.ferns},
                 {"trees", o.trees},      {"k", k},                   {"positives", o.positives},
                 {"negatives", o.negatives}, {"threshold", o.threshold}, {"seed", o.seed},
                 {"targets", manifest.targets}, {"sample_rate", opts.frame.sample_rate}};
    model.metadata = meta.dump();
    write_file(o.out, model.serialize());
    const double elapsed = seconds_since(t0);

    json run = meta;
    run["train_seconds"] = elapsed;
    run["threads"] = threads;
    write_text(o.out + ".run.json", run.dump(2) + "\n");
    std::cout << "trained " << model.targets.size() << " " << o.engine << " classifiers in " << elapsed << " s -> "
              << o.out << '\n';
    return 0;
}

std::string annotation_csv(const BatteryModel& model, const std::vector<FrameAnnotation>& rows) {
    std::ostringstream out;
    out << "time_s,rms";
    for (const auto& t : model.targets) out << ",prob_" << t.label << ",pred_" << t.label;
    out << '\n';
    for (const auto& r : rows) {
        out << fmt_double(r.start_time_s) << ',' << fmt_double(r.rms);
        for (std::size_t t = 0; t < r.probabilities.size(); ++t)
            out << ',' << fmt_double(r.probabilities[t]) << ',' << (r.present[t] ? 1 : 0);
        out << '\n';
    }
    return out.str();
}

int cmd_annotate(const std::string& model_path, const std::string& audio, const std::string& out, unsigned threads) {
    print_config("annotate", {{"model", model_path}, {"audio", audio}, {"out", out}, {"threads", std::to_string(threads)}});
    const auto t0 = Clock::now();
    const BatteryModel model = BatteryModel::deserialize(read_file(model_path));
    const MonoSignal sig = load_mono(audio);
    const auto rows = annotate(model, sig, threads);
    write_text(out, annotation_csv(model, rows));
    std::cout << "annotated " << rows.size() << " frames in " << seconds_since(t0) << " s -> " << out << '\n';
    return 0;
}

struct AnnotationTable {
    std::vector<std::string> instruments;
    std::vector<double> times;
    std::vector<double> rms;
    std::vector<std::vector<bool>> predicted;
};

AnnotationTable parse_annotations(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    AnnotationTable t;
    std::vector<std::size_t> pred_cols;
    std::size_t line_no = 0;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (columns == 0) {
            if (cells.size() < 2 || cells[0] != "time_s" || cells[1] != "rms")
                throw ParseError("annotations line 1: expected header starting with 'time_s,rms'");
            for (std::size_t c = 2; c < cells.size(); ++c) {
                if (cells[c].rfind("pred_", 0) == 0) {
                    t.instruments.push_back(cells[c].substr(5));
                    pred_cols.push_back(c);
                } else if (cells[c].rfind("prob_", 0) != 0) {
                    throw ParseError("annotations line 1: unknown column '" + cells[c] + "'");
                }
            }
            columns = cells.size();
            continue;
        }
        if (cells.size() != columns)
            throw ParseError("annotations line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                             " columns");
        t.times.push_back(detail::parse_number(cells[0], line_no));
        t.rms.push_back(detail::parse_number(cells[1], line_no));
        std::vector<bool> p;
        for (auto c : pred_cols) p.push_back(detail::parse_number(cells[c], line_no) != 0.0);
        t.predicted.push_back(std::move(p));
    }
    if (columns == 0) throw ParseError("annotations file is empty");
    return t;
}

int cmd_eval(const std::string& annotations, const std::string& truth_path, const std::string& out, double frame_ms) {
    print_config("eval", {{"annotations", annotations},
                          {"truth", truth_path},
                          {"out", out.empty() ? "-" : out},
                          {"frame_ms", fmt_double(frame_ms)}});
    const AnnotationTable table = parse_annotations(read_text(annotations));
    const GroundTruth truth = load_ground_truth(read_text(truth_path));

    std::vector<std::string> a = table.instruments, b = truth.instruments();
    std::sort(a.begin(), a.end());
    std::vector<std::string> diff;
    std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(diff));
    if (!diff.empty()) {
        std::string list;
        for (const auto& d : diff) list += (list.empty() ? "" : ",") + d;
        throw InvalidArgumentError("instrument sets differ between annotations and truth: {" + list + "}");
    }

    std::vector<ScoredFrame> frames;
    for (std::size_t i = 0; i < table.times.size(); ++i)
        frames.push_back({table.rms[i], frame_truth(truth, table.instruments, table.times[i], frame_ms / 1000.0),
                          table.predicted[i]});
    const EvalReport report = rms_weighted_scores(frames, table.instruments);
    std::cout << eval_report_table(report);
    if (!out.empty()) write_text(out, eval_report_csv(report));
    return 0;
}

int cmd_bench(const std::string& ferns_path, const std::string& forest_path, const std::string& audio,
              std::size_t repeats, unsigned threads, const std::string& out) {
    print_config("bench", {{"ferns_model", ferns_path},
                           {"forest_model", forest_path},
                           {"audio", audio},
                           {"repeats", std::to_string(repeats)},
                           {"threads", std::to_string(threads)},
                           {"out", out.empty() ? "-" : out}});
    const BatteryModel fe = BatteryModel::deserialize(read_file(ferns_path));
    const BatteryModel fo = BatteryModel::deserialize(read_file(forest_path));
    const MonoSignal sig = load_mono(audio);
    check_compatible(fe, sig.sample_rate);
    check_compatible(fo, sig.sample_rate);

    const auto t0 = Clock::now();
    const auto rows = extract_feature_matrix(sig, fe.frame, threads);
    const double extraction_s = seconds_since(t0);
    std::vector<double> flat(rows.size() * kFeatureCount);
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].values.begin(), rows[r].values.end(), flat.begin() + std::ptrdiff_t(r * kFeatureCount));

    const BenchReport b = benchmark_engines(fe, fo, flat, sig.duration_s(), repeats);
    std::cout << bench_report_table(b);
    std::printf("feature extraction %.6f s (pipeline: ferns %.3f s, forest %.3f s)\n", extraction_s,
                extraction_s + b.ferns_s, extraction_s + b.forest_s);
    if (!out.empty()) write_text(out, bench_report_csv(b));
    return 0;
}

int cmd_features_dump(const std::string& audio, const std::string& out, unsigned threads) {
    // keep stdout clean when the CSV goes there
    print_config("features dump", {{"audio", audio}, {"out", out.empty() ? "-" : out}, {"threads", std::to_string(threads)}},
                 out.empty() ? std::cerr : std::cout);
    const MonoSignal sig = load_mono(audio);
    FrameSpec spec;
    spec.sample_rate = sig.sample_rate;
    const auto rows = extract_feature_matrix(sig, spec, threads);
    std::ostringstream csv;
    csv << "time_s,rms";
    for (const auto& n : feature_names()) csv << ',' << n;
    csv << '\n';
    for (const auto& r : rows) {
        csv << fmt_double(r.start_time_s) << ',' << fmt_double(r.rms);
        for (double v : r.values) csv << ',' << fmt_double(v);
        csv << '\n';
    }
    if (out.empty())
        std::cout << csv.str();
    else
        write_text(out, csv.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Frame-level instrument recognition with random ferns and random forests"};
    app.require_subcommand(1);

    SynthOptions synth_opts;
    auto* synth_cmd = app.add_subcommand("synth", "Render synthetic instrument sources and a test piece");
    synth_cmd->add_option("--out", synth_opts.out_dir, "Output directory")->required();
    synth_cmd->add_option("--seed", synth_opts.seed, "Random seed");
    synth_cmd->add_option("--clips", synth_opts.clips, "Notes per instrument");
    synth_cmd->add_option("--rate", synth_opts.rate, "Sample rate (Hz)");
    synth_cmd->add_option("--piece-seconds", synth_opts.piece_s, "Length of the test piece (0 disables)");

    TrainOptions train_opts;
    auto* train_cmd = app.add_subcommand("train", "Train a battery of per-instrument classifiers");
    train_cmd->add_option("--manifest", train_opts.manifest, "Source manifest (JSON)")->required();
    train_cmd->add_option("--out", train_opts.out, "Model file to write")->required();
    train_cmd->add_option("--engine", train_opts.engine, "ferns or forest")
        ->check(CLI::IsMember({"ferns", "forest"}));
    train_cmd->add_option("--depth", train_opts.depth, "Fern depth D")->check(CLI::Range(1, 30));
    train_cmd->add_option("--ferns", train_opts.ferns, "Ferns per classifier")->check(CLI::PositiveNumber);
    train_cmd->add_option("--trees", train_opts.trees, "Trees per classifier")->check(CLI::PositiveNumber);
    train_cmd->add_option("--k", train_opts.k, "Attributes per split (default floor(sqrt(91)) = 9)")
        ->check(CLI::Range(1, int(kFeatureCount)));
    train_cmd->add_option("--positives", train_opts.positives, "Positive mixes per target")->check(CLI::PositiveNumber);
    train_cmd->add_option("--negatives", train_opts.negatives, "Negative mixes per target")->check(CLI::PositiveNumber);
    train_cmd->add_option("--threshold", train_opts.threshold, "Presence probability threshold")
        ->check(CLI::Range(0.0, 1.0));
    train_cmd->add_option("--seed", train_opts.seed, "Random seed");
    train_cmd->add_option("--threads", train_opts.threads, "Worker threads (0 = all cores)");

    std::string model_path, audio_path, out_path;
    unsigned annotate_threads = 0;
    auto* annotate_cmd = app.add_subcommand("annotate", "Annotate an audio file frame by frame");
    annotate_cmd->add_option("--model", model_path, "Battery model file")->required();
    annotate_cmd->add_option("--audio", audio_path, "WAV file")->required();
    annotate_cmd->add_option("--out", out_path, "Annotation CSV to write")->required();
    annotate_cmd->add_option("--threads", annotate_threads, "Worker threads (0 = all cores)");

    std::string annotations_path, truth_path, eval_out;
    double frame_ms = 40.0;
    auto* eval_cmd = app.add_subcommand("eval", "Score annotations against ground truth");
    eval_cmd->add_option("--annotations", annotations_path, "Annotation CSV")->required();
    eval_cmd->add_option("--truth", truth_path, "Ground truth CSV (instrument,start_s,end_s)")->required();
    eval_cmd->add_option("--out", eval_out, "Report CSV to write");
    eval_cmd->add_option("--frame-ms", frame_ms, "Frame length used for the overlap rule");

    std::string ferns_model, forest_model, bench_audio, bench_out;
    std::size_t repeats = 3;
    unsigned bench_threads = 1;
    auto* bench_cmd = app.add_subcommand("bench", "Time ferns and forest batteries on the same audio");
    bench_cmd->add_option("--ferns-model", ferns_model, "Ferns battery")->required();
    bench_cmd->add_option("--forest-model", forest_model, "Forest battery")->required();
    bench_cmd->add_option("--audio", bench_audio, "WAV file")->required();
    bench_cmd->add_option("--repeats", repeats, "Timing repetitions (best of)")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--threads", bench_threads, "Threads for feature extraction");
    bench_cmd->add_option("--out", bench_out, "Report CSV to write");

    std::string features_audio, features_out;
    unsigned features_threads = 1;
    auto* features_cmd = app.add_subcommand("features", "Feature extraction utilities");
    features_cmd->require_subcommand(1);
    auto* dump_cmd = features_cmd->add_subcommand("dump", "Write the 91 features of every frame as CSV");
    dump_cmd->add_option("--audio", features_audio, "WAV file")->required();
    dump_cmd->add_option("--out", features_out, "CSV to write (default stdout)");
    dump_cmd->add_option("--threads", features_threads, "Worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*synth_cmd) return cmd_synth(synth_opts);
        if (*train_cmd) return cmd_train(train_opts);
        if (*annotate_cmd)
            return cmd_annotate(model_path, audio_path, out_path, annotate_threads ? annotate_threads : hardware_threads());
        if (*eval_cmd) return cmd_eval(annotations_path, truth_path, eval_out, frame_ms);
        if (*bench_cmd) return cmd_bench(ferns_model, forest_model, bench_audio, repeats, bench_threads, bench_out);
        if (*dump_cmd) return cmd_features_dump(features_audio, features_out, features_threads);
    } catch (const Error& e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
