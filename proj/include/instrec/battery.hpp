#pragma once

// Battery of per-instrument binary classifiers.
//
// Training data for a target instrument are single 40 ms frames of random
// mixes: 1..4 distinct instruments, each contributing a random 40 ms window of
// a random clip scaled by a weight drawn from (0, 1], the sum renormalized to
// RMS 1. Positive mixes always contain the target, negative mixes never do.
//
// Streams (see rng.hpp), with h = hash_label(target):
//   mix i of kind k (1 positive, 0 negative): make_stream(set_seed, h, k, i)
//   training-set seed of a target:            derive_seed(seed, h, 1)
//   classifier seed of a target:              derive_seed(seed, h, 2)

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "instrec/audio_io.hpp"
#include "instrec/binary_io.hpp"
#include "instrec/dataset.hpp"
#include "instrec/error.hpp"
#include "instrec/features.hpp"
#include "instrec/ferns.hpp"
#include "instrec/forest.hpp"
#include "instrec/parallel.hpp"
#include "instrec/rng.hpp"

namespace instrec {

enum class SourceRole : std::uint8_t { Target = 0, Accompanying = 1 };

inline const char* to_string(SourceRole r) { return r == SourceRole::Target ? "target" : "accompanying"; }

struct InstrumentSource {
    std::string label;
    std::vector<MonoSignal> clips;
    SourceRole role = SourceRole::Target;
};

/// Trims silence from both ends of each clip and normalizes it to RMS 1.
inline InstrumentSource prepare_source(std::string label, const std::vector<MonoSignal>& raw, SourceRole role,
                                       double silence_threshold = kDefaultSilenceThreshold) {
    InstrumentSource s{std::move(label), {}, role};
    s.clips.reserve(raw.size());
    for (const auto& clip : raw) s.clips.push_back(normalize_rms(trim_silence(clip, silence_threshold)));
    return s;
}

struct MixComponent {
    std::string label;
    std::uint32_t clip = 0;
    std::uint64_t offset = 0;
    double weight = 0.0;

    bool operator==(const MixComponent&) const = default;
};

struct MixRecipe {
    std::vector<MixComponent> components;
    std::uint64_t stream_seed = 0;

    bool contains(std::string_view label) const {
        for (const auto& c : components)
            if (c.label == label) return true;
        return false;
    }

    bool operator==(const MixRecipe&) const = default;
};

struct Mix {
    MonoSignal frame;
    MixRecipe recipe;
};

enum class MixKind { Positive, Negative, Any };

inline constexpr std::size_t kMaxMixComponents = 4;
inline constexpr int kMixRetries = 16;

/// Checks the requirements shared by mixing and training: at least one
/// source, non-empty clips of RMS 1 at one sample rate, each at least
/// `frame_length` samples long. Returns the common sample rate.
inline std::uint32_t validate_sources(std::span<const InstrumentSource> sources, std::size_t frame_length) {
    if (sources.empty()) throw InvalidArgumentError("no instrument sources");
    std::uint32_t rate = 0;
    for (const auto& s : sources) {
        if (s.clips.empty()) throw InvalidArgumentError("source '" + s.label + "' has no clips");
        for (const auto& c : s.clips) {
            if (rate == 0) rate = c.sample_rate;
            if (c.sample_rate != rate)
                throw InvalidArgumentError("source '" + s.label + "' has a clip at " + std::to_string(c.sample_rate) +
                                           " Hz, expected " + std::to_string(rate) + " Hz");
            if (c.size() < frame_length)
                throw TooShortError("a clip of source '" + s.label + "' is shorter than one frame");
            if (std::abs(rms(c.samples) - 1.0) > 1e-6)
                throw InvalidArgumentError("a clip of source '" + s.label + "' is not RMS-normalized");
        }
    }
    for (std::size_t i = 0; i < sources.size(); ++i)
        for (std::size_t j = i + 1; j < sources.size(); ++j)
            if (sources[i].label == sources[j].label)
                throw InvalidArgumentError("duplicate source label '" + sources[i].label + "'");
    return rate;
}

/// One mixed frame of `frame_length` samples. For Positive and Negative mixes
/// `target` names the instrument that must (or must not) take part. When
/// fewer instruments are available than the drawn component count, the
/// count shrinks to what is available.
inline Mix generate_mix(std::span<const InstrumentSource> sources, MixKind kind, std::string_view target,
                        std::size_t frame_length, Engine& rng) {
    std::vector<std::size_t> pool;
    std::optional<std::size_t> forced;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (kind != MixKind::Any && sources[i].label == target) {
            if (kind == MixKind::Positive) forced = i;
            continue;
        }
        pool.push_back(i);
    }
    if (kind == MixKind::Positive && !forced)
        throw InvalidArgumentError("target '" + std::string(target) + "' is not among the sources");
    if (kind != MixKind::Positive && pool.empty())
        throw InvalidArgumentError("no instrument available for a mix without '" + std::string(target) + "'");

    for (int attempt = 0; attempt < kMixRetries; ++attempt) {
        std::size_t count = 1 + uniform_index(rng, kMaxMixComponents);
        std::vector<std::size_t> chosen;
        if (forced) {
            chosen.push_back(*forced);
            count = std::min(count, pool.size() + 1);
        } else {
            count = std::min(count, pool.size());
        }
        std::vector<std::size_t> shuffled = pool;
        for (std::size_t i = 0; chosen.size() < count; ++i) {
            const std::size_t j = i + uniform_index(rng, shuffled.size() - i);
            std::swap(shuffled[i], shuffled[j]);
            chosen.push_back(shuffled[i]);
        }

        Mix mix;
        mix.frame.sample_rate = sources[chosen.front()].clips.front().sample_rate;
        mix.frame.samples.assign(frame_length, 0.0);
        for (std::size_t s : chosen) {
            const auto& src = sources[s];
            MixComponent c;
            c.label = src.label;
            c.clip = static_cast<std::uint32_t>(uniform_index(rng, src.clips.size()));
            const auto& clip = src.clips[c.clip].samples;
            c.offset = uniform_index(rng, clip.size() - frame_length + 1);
            c.weight = uniform_open_closed(rng);
            for (std::size_t i = 0; i < frame_length; ++i) mix.frame.samples[i] += c.weight * clip[c.offset + i];
            mix.recipe.components.push_back(std::move(c));
        }
        const double level = rms(mix.frame.samples);
        if (level > 0.0) {
            for (double& v : mix.frame.samples) v /= level;
            return mix;
        }
    }
    throw DegenerateSignalError("every mix draw was silent after " + std::to_string(kMixRetries) + " attempts");
}

enum class EngineKind : std::uint8_t { Ferns = 0, Forest = 1 };

inline const char* to_string(EngineKind e) { return e == EngineKind::Ferns ? "ferns" : "forest"; }

struct EngineSpec {
    EngineKind kind = EngineKind::Ferns;
    std::uint32_t depth = 10;
    std::uint32_t ferns = 1000;
    std::uint32_t trees = 1000;
    /// 0 selects floor(sqrt(P)).
    std::uint32_t k = 0;
};

struct TrainingSetSpec {
    std::size_t positives = 3000;
    std::size_t negatives = 3000;
    EngineSpec engine;
};

inline constexpr std::uint32_t kAbsent = 0;
inline constexpr std::uint32_t kPresent = 1;

struct TrainingSet {
    Dataset data;
    std::vector<MixRecipe> recipes;
};

inline TrainingSet build_training_set(std::string_view target, std::span<const InstrumentSource> sources,
                                      const TrainingSetSpec& spec, std::uint64_t seed, const FrameSpec& frame,
                                      unsigned threads = 1) {
    if (spec.positives == 0 || spec.negatives == 0) throw InvalidArgumentError("mix counts must be positive");
    frame.validate();
    const std::uint32_t rate = validate_sources(sources, frame.frame_length());
    if (rate != frame.sample_rate)
        throw InvalidArgumentError("sources are at " + std::to_string(rate) + " Hz, frame spec at " +
                                   std::to_string(frame.sample_rate) + " Hz");
    bool has_target = false, has_other = false;
    for (const auto& s : sources) (s.label == target ? has_target : has_other) = true;
    if (!has_target) throw InvalidArgumentError("target '" + std::string(target) + "' is not among the sources");
    if (!has_other) throw InvalidArgumentError("training '" + std::string(target) + "' needs another instrument");

    const std::size_t total = spec.positives + spec.negatives;
    const std::uint64_t h = hash_label(target);
    TrainingSet out;
    out.data.attribute_count = kFeatureCount;
    out.data.class_labels = {"absent", "present"};
    out.data.values.resize(total * kFeatureCount);
    out.data.labels.resize(total);
    out.recipes.resize(total);

    threads = std::max(1u, threads);
    const std::size_t block = (total + threads - 1) / threads;
    parallel_for(threads, threads, [&](std::size_t t) {
        FeatureExtractor fx(rate);
        for (std::size_t row = t * block; row < std::min(total, (t + 1) * block); ++row) {
            const bool positive = row < spec.positives;
            const std::size_t i = positive ? row : row - spec.positives;
            const std::uint64_t kind = positive ? 1 : 0;
            const std::uint64_t stream = derive_seed(seed, h, kind, i);
            Engine rng(stream);
            Mix mix = generate_mix(sources, positive ? MixKind::Positive : MixKind::Negative, target,
                                   frame.frame_length(), rng);
            mix.recipe.stream_seed = stream;
            const FeatureVector v = fx.frame_features(mix.frame.samples, frame);
            std::copy(v.begin(), v.end(), out.data.values.begin() + std::ptrdiff_t(row * kFeatureCount));
            out.data.labels[row] = positive ? kPresent : kAbsent;
            out.recipes[row] = std::move(mix.recipe);
        }
    });
    return out;
}

using Classifier = std::variant<FernForest, RandomForest>;

inline EngineKind engine_of(const Classifier& c) {
    return std::holds_alternative<FernForest>(c) ? EngineKind::Ferns : EngineKind::Forest;
}

/// Probability of class `present` for each row-major input row: the
/// combined fern probability or the forest's vote fraction.
inline std::vector<double> present_probabilities(const Classifier& c, std::span<const double> rows) {
    return std::visit(
        [&](const auto& model) {
            std::vector<double> all;
            if constexpr (std::is_same_v<std::decay_t<decltype(model)>, FernForest>)
                all = model.predict_scores_batch(rows);
            else
                all = model.predict_votes_batch(rows);
            const std::size_t C = model.class_count();
            std::vector<double> p(all.size() / C);
            for (std::size_t r = 0; r < p.size(); ++r) p[r] = all[r * C + kPresent];
            return p;
        },
        c);
}

inline Classifier train_classifier(const Dataset& data, const EngineSpec& engine, std::uint64_t seed,
                                   unsigned threads) {
    if (engine.kind == EngineKind::Ferns)
        return train_fern_forest(data, FernParams{engine.depth, engine.ferns, seed, threads});
    return train_forest(data, ForestParams{engine.trees, engine.k, seed, threads});
}

struct TargetClassifier {
    std::string label;
    double threshold = 0.5;
    Classifier model;
};

struct BatteryModel {
    static constexpr char kMagic[] = "IRBATTRY";
    static constexpr std::uint32_t kVersion = 1;

    FrameSpec frame;
    std::uint32_t layout_version = kFeatureLayoutVersion;
    std::vector<TargetClassifier> targets;
    /// Free-form run description (parameters, seed) stored with the model.
    std::string metadata;

    std::vector<std::string> target_labels() const {
        std::vector<std::string> out;
        for (const auto& t : targets) out.push_back(t.label);
        return out;
    }

    Bytes serialize() const {
        ByteWriter w;
        w.magic(std::string_view(kMagic, sizeof(kMagic) - 1));
        w.u32(kVersion);
        w.u32(frame.sample_rate);
        w.f64(frame.frame_ms);
        w.f64(frame.hop_ms);
        w.f64(frame.subframe_ms);
        w.f64(frame.subframe_shift_ms);
        w.u32(layout_version);
        w.u32(static_cast<std::uint32_t>(targets.size()));
        for (const auto& t : targets) {
            w.str(t.label);
            w.f64(t.threshold);
            w.u8(static_cast<std::uint8_t>(engine_of(t.model)));
            w.blob(std::visit([](const auto& m) { return m.serialize(); }, t.model));
        }
        w.str(metadata);
        return std::move(w).bytes();
    }

    static BatteryModel deserialize(std::span<const std::uint8_t> bytes) {
        ByteReader r(bytes);
        r.expect_magic(std::string_view(kMagic, sizeof(kMagic) - 1));
        const auto version = r.u32();
        if (version != kVersion) throw FormatError("unsupported battery model version " + std::to_string(version));
        BatteryModel m;
        m.frame.sample_rate = r.u32();
        m.frame.frame_ms = r.f64();
        m.frame.hop_ms = r.f64();
        m.frame.subframe_ms = r.f64();
        m.frame.subframe_shift_ms = r.f64();
        m.layout_version = r.u32();
        const auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            TargetClassifier t;
            t.label = r.str();
            t.threshold = r.f64();
            const auto kind = r.u8();
            const auto blob = r.blob();
            if (kind == static_cast<std::uint8_t>(EngineKind::Ferns))
                t.model = FernForest::deserialize(blob);
            else if (kind == static_cast<std::uint8_t>(EngineKind::Forest))
                t.model = RandomForest::deserialize(blob);
            else
                throw FormatError("unknown engine kind " + std::to_string(kind));
            m.targets.push_back(std::move(t));
        }
        m.metadata = r.str();
        r.expect_end();
        return m;
    }
};

struct BatteryOptions {
    TrainingSetSpec spec;
    FrameSpec frame;
    double threshold = 0.5;
    unsigned threads = 1;
};

inline BatteryModel train_battery(std::span<const std::string> targets, std::span<const InstrumentSource> sources,
                                  const BatteryOptions& options, std::uint64_t seed) {
    if (targets.empty()) throw InvalidArgumentError("a battery needs at least one target");
    BatteryModel model;
    model.frame = options.frame;
    for (const auto& target : targets) {
        const std::uint64_t h = hash_label(target);
        const TrainingSet ts =
            build_training_set(target, sources, options.spec, derive_seed(seed, h, 1), options.frame, options.threads);
        model.targets.push_back(
            {target, options.threshold,
             train_classifier(ts.data, options.spec.engine, derive_seed(seed, h, 2), options.threads)});
    }
    return model;
}

struct FrameAnnotation {
    double start_time_s = 0.0;
    double rms = 0.0;
    std::vector<double> probabilities;
    std::vector<bool> present;
};

/// Presence probabilities for precomputed feature rows; rows x targets.
inline std::vector<std::vector<double>> classify_rows(const BatteryModel& model, std::span<const double> rows) {
    std::vector<std::vector<double>> per_target;
    for (const auto& t : model.targets) per_target.push_back(present_probabilities(t.model, rows));
    return per_target;
}

inline void check_compatible(const BatteryModel& model, std::uint32_t sample_rate) {
    if (model.layout_version != kFeatureLayoutVersion)
        throw IncompatibleModelError("model uses feature layout " + std::to_string(model.layout_version) +
                                     ", this build extracts layout " + std::to_string(kFeatureLayoutVersion) +
                                     "; retrain the model");
    if (model.frame.sample_rate != sample_rate)
        throw IncompatibleModelError("model expects " + std::to_string(model.frame.sample_rate) +
                                     " Hz audio, got " + std::to_string(sample_rate) +
                                     " Hz; resample the input or retrain at this rate");
}

/// Per-frame multi-label annotation. Each target is present when its
/// probability is strictly above its threshold.
inline std::vector<FrameAnnotation> annotate(const BatteryModel& model, const MonoSignal& sig, unsigned threads = 1) {
    check_compatible(model, sig.sample_rate);
    const auto rows = extract_feature_matrix(sig, model.frame, threads);
    std::vector<double> flat(rows.size() * kFeatureCount);
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].values.begin(), rows[r].values.end(), flat.begin() + std::ptrdiff_t(r * kFeatureCount));
    const auto probs = classify_rows(model, flat);

    std::vector<FrameAnnotation> out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out[r].start_time_s = rows[r].start_time_s;
        out[r].rms = rows[r].rms;
        for (std::size_t t = 0; t < model.targets.size(); ++t) {
            out[r].probabilities.push_back(probs[t][r]);
            out[r].present.push_back(probs[t][r] > model.targets[t].threshold);
        }
    }
    return out;
}

}  // namespace instrec
