#pragma once

// Deterministic additive synthesizer for stand-in instrument recordings.
//
// Each instrument is a timbre recipe (partial layout, amplitude roll-off,
// pitch range, envelope). Notes are rendered with a short silent lead-in and
// tail so the usual trim/normalize preparation applies to them unchanged.

#include <sstream>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "instrec/audio_io.hpp"
#include "instrec/battery.hpp"
#include "instrec/evaluation.hpp"
#include "instrec/rng.hpp"

namespace instrec::synth {

enum class Timbre {
    OddHarmonics,   // clarinet-like: odd partials, 1/n
    BrightBrass,    // trumpet-like: all partials, spectral peak near the 4th
    DarkBrass,      // trombone-like: all partials, 1/n^1.5, slow attack
    LowTuba,        // sousaphone-like: strong fundamental, 1/n^2.5
    Inharmonic,     // vibraphone-like: ratios 1, 3.93, 9.24 with fast decay
    BandNoise,      // brushes: noise shaped to 2..8 kHz
};

struct InstrumentDef {
    std::string label;
    SourceRole role = SourceRole::Target;
    Timbre timbre = Timbre::OddHarmonics;
    /// MIDI note range of the instrument.
    int lowest_note = 60;
    int highest_note = 72;
    double attack_s = 0.03;
    double release_s = 0.08;
};

inline std::vector<InstrumentDef> default_instruments() {
    return {
        {"clarinet", SourceRole::Target, Timbre::OddHarmonics, 50, 77, 0.03, 0.08},
        {"trumpet", SourceRole::Target, Timbre::BrightBrass, 54, 82, 0.02, 0.06},
        {"trombone", SourceRole::Target, Timbre::DarkBrass, 40, 70, 0.06, 0.10},
        {"sousaphone", SourceRole::Target, Timbre::LowTuba, 28, 53, 0.05, 0.10},
        {"vibraphone", SourceRole::Accompanying, Timbre::Inharmonic, 53, 89, 0.002, 0.30},
        {"brushes", SourceRole::Accompanying, Timbre::BandNoise, 60, 60, 0.01, 0.05},
    };
}

inline double midi_to_hz(double note) { return 440.0 * std::exp2((note - 69.0) / 12.0); }

namespace detail {

struct Partial {
    double ratio;
    double amplitude;
    double decay_per_s;
};

inline std::vector<Partial> partials(Timbre t, double f0, double nyquist) {
    std::vector<Partial> out;
    const double limit = std::min(0.9 * nyquist, 12000.0);
    switch (t) {
        case Timbre::OddHarmonics:
            for (int n = 1; n * f0 < limit; n += 2) out.push_back({double(n), 1.0 / n, 0.0});
            break;
        case Timbre::BrightBrass:
            for (int n = 1; n * f0 < limit; ++n) {
                const double x = std::log2(double(n) / 4.0);
                out.push_back({double(n), std::exp(-0.5 * x * x / 0.8), 0.0});
            }
            break;
        case Timbre::DarkBrass:
            for (int n = 1; n * f0 < limit; ++n) out.push_back({double(n), std::pow(double(n), -1.5), 0.0});
            break;
        case Timbre::LowTuba:
            for (int n = 1; n <= 8 && n * f0 < limit; ++n) out.push_back({double(n), std::pow(double(n), -2.5), 0.0});
            break;
        case Timbre::Inharmonic:
            for (auto [r, a, d] : {Partial{1.0, 1.0, 1.2}, Partial{3.93, 0.5, 3.0}, Partial{9.24, 0.25, 6.0}})
                if (r * f0 < limit) out.push_back({r, a, d});
            break;
        case Timbre::BandNoise:
            break;
    }
    return out;
}

inline double envelope(double t, double duration, double attack, double release) {
    if (t < 0.0 || t >= duration) return 0.0;
    double e = 1.0;
    if (t < attack) e = t / attack;
    if (t > duration - release) e = std::min(e, (duration - t) / release);
    return e;
}

}  // namespace detail

/// One note of `duration_s` seconds at `note` (MIDI number), preceded and
/// followed by `pad_s` seconds of silence.
inline MonoSignal render_note(const InstrumentDef& def, double note, double duration_s, std::uint32_t rate,
                              Engine& rng, double pad_s = 0.05) {
    const auto pad = static_cast<std::size_t>(pad_s * rate);
    const auto body = static_cast<std::size_t>(duration_s * rate);
    MonoSignal out;
    out.sample_rate = rate;
    out.samples.assign(pad + body + pad, 0.0);
    const double f0 = midi_to_hz(note);
    const double dt = 1.0 / rate;

    if (def.timbre == Timbre::BandNoise) {
        // two-pole resonators at 2.5 and 6 kHz driven by white noise
        struct Resonator {
            double a1, a2, y1 = 0, y2 = 0;
        };
        std::vector<Resonator> bank;
        for (double fc : {2500.0, 6000.0}) {
            const double r = std::exp(-M_PI * 1500.0 * dt);
            bank.push_back({2.0 * r * std::cos(2.0 * M_PI * fc * dt), -r * r});
        }
        for (std::size_t i = 0; i < body; ++i) {
            const double e = standard_normal(rng);
            double y = 0.0;
            for (auto& b : bank) {
                const double v = e + b.a1 * b.y1 + b.a2 * b.y2;
                b.y2 = b.y1;
                b.y1 = v;
                y += v;
            }
            const double t = double(i) * dt;
            out.samples[pad + i] = 0.05 * y * detail::envelope(t, duration_s, def.attack_s, def.release_s) *
                                   std::exp(-2.0 * t);
        }
        return out;
    }

    const auto parts = detail::partials(def.timbre, f0, rate / 2.0);
    const double vibrato_hz = uniform_range(rng, 4.5, 6.0);
    const double vibrato_depth = def.timbre == Timbre::OddHarmonics || def.timbre == Timbre::BrightBrass ? 0.004 : 0.0015;
    std::vector<double> phase(parts.size());
    for (auto& p : phase) p = uniform_range(rng, 0.0, 2.0 * M_PI);
    const double gain_jitter = uniform_range(rng, 0.8, 1.0);

    for (std::size_t i = 0; i < body; ++i) {
        const double t = double(i) * dt;
        const double freq = f0 * (1.0 + vibrato_depth * std::sin(2.0 * M_PI * vibrato_hz * t));
        double y = 0.0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            phase[p] += 2.0 * M_PI * freq * parts[p].ratio * dt;
            y += parts[p].amplitude * std::exp(-parts[p].decay_per_s * t) * std::sin(phase[p]);
        }
        out.samples[pad + i] = 0.3 * gain_jitter * y * detail::envelope(t, duration_s, def.attack_s, def.release_s);
    }
    return out;
}

/// `count` notes of random pitch within the instrument's range.
inline std::vector<MonoSignal> render_clips(const InstrumentDef& def, std::size_t count, std::uint32_t rate,
                                            std::uint64_t seed, double duration_s = 1.0) {
    std::vector<MonoSignal> clips;
    for (std::size_t i = 0; i < count; ++i) {
        Engine rng = make_stream(seed, hash_label(def.label), i);
        const int span = def.highest_note - def.lowest_note + 1;
        const double note = def.lowest_note + double(uniform_index(rng, std::uint64_t(span)));
        clips.push_back(render_note(def, note, duration_s, rate, rng));
    }
    return clips;
}

/// Prepared (trimmed, RMS-normalized) sources for every instrument.
inline std::vector<InstrumentSource> make_sources(const std::vector<InstrumentDef>& defs, std::size_t clips_per_instrument,
                                                  std::uint32_t rate, std::uint64_t seed) {
    std::vector<InstrumentSource> out;
    for (const auto& d : defs) out.push_back(prepare_source(d.label, render_clips(d, clips_per_instrument, rate, seed), d.role));
    return out;
}

struct Piece {
    MonoSignal audio;
    /// Note intervals of the target instruments.
    GroundTruth truth;
};

/// A polyphonic piece: every instrument alternates notes (0.4..1.6 s) and
/// rests (0.2..1.2 s) independently, at its own random level.
inline Piece render_piece(const std::vector<InstrumentDef>& defs, double duration_s, std::uint32_t rate,
                          std::uint64_t seed) {
    Piece piece;
    piece.audio.sample_rate = rate;
    const auto total = static_cast<std::size_t>(duration_s * rate);
    piece.audio.samples.assign(total, 0.0);
    for (const auto& def : defs) {
        Engine rng = make_stream(seed, hash_label(def.label), 0xC0FFEEu);
        const double level = uniform_range(rng, 0.4, 1.0);
        double t = uniform_range(rng, 0.0, 1.0);
        while (t < duration_s) {
            const double len = uniform_range(rng, 0.4, 1.6);
            const int span = def.highest_note - def.lowest_note + 1;
            const double note = def.lowest_note + double(uniform_index(rng, std::uint64_t(span)));
            const MonoSignal n = render_note(def, note, len, rate, rng, 0.0);
            const auto start = static_cast<std::size_t>(t * rate);
            const double r = rms(n.samples);
            for (std::size_t i = 0; i < n.size() && start + i < total; ++i)
                piece.audio.samples[start + i] += level * n.samples[i] / r;
            if (def.role == SourceRole::Target)
                piece.truth.intervals[def.label].push_back({t, std::min(t + len, duration_s)});
            t += len + uniform_range(rng, 0.2, 1.2);
        }
        if (def.role == SourceRole::Target) piece.truth.intervals[def.label];
    }
    double peak = 0.0;
    for (double v : piece.audio.samples) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
        for (double& v : piece.audio.samples) v *= 0.9 / peak;
    return piece;
}

inline std::string ground_truth_csv(const GroundTruth& gt) {
    std::ostringstream out;
    out.precision(17);
    out << "instrument,start_s,end_s\n";
    for (const auto& [name, list] : gt.intervals)
        for (const auto& iv : list) out << name << ',' << iv.start_s << ',' << iv.end_s << '\n';
    return out.str();
}

}  // namespace instrec::synth
