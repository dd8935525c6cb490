#pragma once

// 91-dimensional frame descriptor.
//
// Layout of FeatureVector (0-based):
//   0..24   spectral flatness of quarter-octave bands 1..25
//   25      spectrum centroid, octave scale (log2(f / 1 kHz))
//   26      spectrum spread, octave scale
//   27      log10 energy
//   28..39  MFCC 1..12
//   40      MFCC 0
//   41      zero crossing rate
//   42      85% roll-off frequency (Hz)
//   43      spectrum centroid, linear scale (Hz)
//   44      spectrum spread, linear scale (Hz)
//   45..89  deltas of 0..44 between the late and early 30 ms sub-frames
//   90      flux between the two sub-frames
//
// Constants:
//   Hamming window w[n] = 0.54 - 0.46 cos(2 pi n / (N - 1)), zero padding to the
//   next power of two (2048 for both 40 ms and 30 ms frames at 44.1 kHz).
//   Flatness bands: edges 62.5 Hz * 2^(k/4), k = 0..32; bands 1..25 are used.
//   A band that contains no bin centre falls back to the single bin nearest
//   to its geometric centre.
//   Octave scale: bins below 62.5 Hz are pooled into one coefficient at
//   31.25 Hz.
//   MFCC: 24 triangular mel filters (mel = 2595 log10(1 + f/700)) from 0 Hz to
//   Nyquist over the power spectrum, natural log, orthonormal DCT-II.
//   Every logarithm is taken of (x + 1e-10).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "instrec/audio_io.hpp"
#include "instrec/error.hpp"
#include "instrec/fft.hpp"

namespace instrec {

inline constexpr std::size_t kStaticFeatureCount = 45;
inline constexpr std::size_t kFeatureCount = 91;
inline constexpr std::uint32_t kFeatureLayoutVersion = 1;

inline constexpr std::size_t kFlatnessBands = 25;
inline constexpr std::size_t kFlatnessBandsTotal = 32;
inline constexpr double kFlatnessLowEdgeHz = 62.5;
inline constexpr std::size_t kMelFilters = 24;
inline constexpr std::size_t kCepstralCoefficients = 13;
inline constexpr double kRollOffFraction = 0.85;
inline constexpr double kLogFloor = 1e-10;

using FeatureVector = std::array<double, kFeatureCount>;
using StaticFeatures = std::array<double, kStaticFeatureCount>;

/// Index of each static descriptor inside a FeatureVector.
namespace feature_index {
inline constexpr std::size_t kFlatness = 0;
inline constexpr std::size_t kCentroid = 25;
inline constexpr std::size_t kSpread = 26;
inline constexpr std::size_t kEnergy = 27;
inline constexpr std::size_t kMfcc = 28;
inline constexpr std::size_t kMfcc0 = 40;
inline constexpr std::size_t kZeroCrossingRate = 41;
inline constexpr std::size_t kRollOff = 42;
inline constexpr std::size_t kLinearCentroid = 43;
inline constexpr std::size_t kLinearSpread = 44;
inline constexpr std::size_t kDelta = 45;
inline constexpr std::size_t kFlux = 90;
}  // namespace feature_index

/// Column names, in FeatureVector order.
inline const std::array<std::string, kFeatureCount>& feature_names() {
    static const auto names = [] {
        std::array<std::string, kFeatureCount> n;
        for (std::size_t i = 0; i < kFlatnessBands; ++i) n[i] = "flat_" + std::to_string(i + 1);
        n[25] = "centroid";
        n[26] = "spread";
        n[27] = "energy";
        for (std::size_t i = 0; i < 12; ++i) n[28 + i] = "mfcc_" + std::to_string(i + 1);
        n[40] = "mfcc_0";
        n[41] = "zcr";
        n[42] = "rolloff";
        n[43] = "lin_centroid";
        n[44] = "lin_spread";
        for (std::size_t i = 0; i < kStaticFeatureCount; ++i) n[45 + i] = "d_" + n[i];
        n[90] = "flux";
        return n;
    }();
    return names;
}

/// Frame geometry in milliseconds; sample counts are derived per rate.
struct FrameSpec {
    std::uint32_t sample_rate = 44100;
    double frame_ms = 40.0;
    double hop_ms = 10.0;
    double subframe_ms = 30.0;
    double subframe_shift_ms = 10.0;

    static std::size_t samples_for(double ms, std::uint32_t rate) {
        return static_cast<std::size_t>(std::llround(ms * rate / 1000.0));
    }

    std::size_t frame_length() const { return samples_for(frame_ms, sample_rate); }
    std::size_t hop_length() const { return samples_for(hop_ms, sample_rate); }
    std::size_t subframe_length() const { return samples_for(subframe_ms, sample_rate); }
    std::size_t subframe_shift() const { return samples_for(subframe_shift_ms, sample_rate); }

    void validate() const {
        if (sample_rate == 0) throw InvalidArgumentError("sample rate must be positive");
        if (frame_length() == 0 || hop_length() == 0 || subframe_length() == 0)
            throw InvalidArgumentError("frame, hop and sub-frame lengths must be positive");
        if (subframe_length() + subframe_shift() != frame_length())
            throw InvalidArgumentError("sub-frame length plus shift must equal the frame length");
    }

    bool operator==(const FrameSpec&) const = default;
};

/// Magnitudes of the non-negative frequency bins, k = 0 .. fft_size/2.
struct SpectrumFrame {
    std::vector<double> magnitudes;
    double bin_hz = 0.0;

    double frequency(std::size_t k) const { return double(k) * bin_hz; }
};

struct FrameView {
    std::size_t start = 0;
    std::span<const double> samples;
};

/// Consecutive full frames; trailing samples that do not fill a frame are dropped.
inline std::size_t frame_count(std::size_t signal_length, const FrameSpec& spec) {
    const std::size_t len = spec.frame_length();
    if (signal_length < len) return 0;
    return (signal_length - len) / spec.hop_length() + 1;
}

inline std::vector<FrameView> iterate_frames(const MonoSignal& sig, const FrameSpec& spec) {
    spec.validate();
    const std::size_t len = spec.frame_length();
    if (sig.size() < len)
        throw TooShortError("signal has " + std::to_string(sig.size()) + " samples, a frame needs " +
                            std::to_string(len));
    const std::size_t n = frame_count(sig.size(), spec);
    std::vector<FrameView> frames;
    frames.reserve(n);
    const std::span<const double> all(sig.samples);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t start = i * spec.hop_length();
        frames.push_back({start, all.subspan(start, len)});
    }
    return frames;
}

/// Spectral analysis state (FFT plans, windows, filterbanks) reused across
/// frames. Not thread-safe; use one per thread.
class FeatureExtractor {
public:
    explicit FeatureExtractor(std::uint32_t sample_rate) : rate_(sample_rate) {
        if (sample_rate == 0) throw InvalidArgumentError("sample rate must be positive");
    }

    std::uint32_t sample_rate() const { return rate_; }

    SpectrumFrame power_spectrum(std::span<const double> frame) {
        SpectrumFrame out;
        if (frame.empty()) return out;
        const std::size_t n = frame.size();
        const std::size_t size = next_pow2(n);
        const FftPlan& plan = plan_for(size);
        const std::vector<double>& window = window_for(n);
        buffer_.assign(size, {0.0, 0.0});
        for (std::size_t i = 0; i < n; ++i) buffer_[i] = {frame[i] * window[i], 0.0};
        plan.forward(buffer_);
        out.magnitudes.resize(size / 2 + 1);
        for (std::size_t k = 0; k <= size / 2; ++k) out.magnitudes[k] = std::abs(buffer_[k]);
        out.bin_hz = double(rate_) / double(size);
        return out;
    }

    StaticFeatures static_features(const SpectrumFrame& spec, std::span<const double> time_frame) {
        StaticFeatures f{};
        const auto& mag = spec.magnitudes;
        const std::size_t bins = mag.size();
        power_.resize(bins);
        for (std::size_t k = 0; k < bins; ++k) power_[k] = mag[k] * mag[k];

        const Layout& layout = layout_for(bins, spec.bin_hz);

        for (std::size_t b = 0; b < kFlatnessBands; ++b) {
            const auto [lo, hi] = layout.bands[b];
            double log_sum = 0.0, sum = 0.0;
            for (std::size_t k = lo; k < hi; ++k) {
                const double p = power_[k] + kLogFloor;
                log_sum += std::log(p);
                sum += p;
            }
            const double count = double(hi - lo);
            f[feature_index::kFlatness + b] = std::min(1.0, std::exp(log_sum / count) / (sum / count));
        }

        // octave-scale centroid and spread
        {
            double total = 0.0, moment = 0.0;
            for (std::size_t k = 0; k < bins; ++k) {
                total += power_[k];
                moment += power_[k] * layout.octave[k];
            }
            double centroid = 0.0, spread = 0.0;
            if (total > 0.0) {
                centroid = moment / total;
                double var = 0.0;
                for (std::size_t k = 0; k < bins; ++k) {
                    const double d = layout.octave[k] - centroid;
                    var += power_[k] * d * d;
                }
                spread = std::sqrt(var / total);
            }
            f[feature_index::kCentroid] = centroid;
            f[feature_index::kSpread] = spread;
        }

        double total_power = 0.0;
        for (double p : power_) total_power += p;
        f[feature_index::kEnergy] = std::log10(total_power + kLogFloor);

        // MFCC
        {
            std::array<double, kMelFilters> log_energy{};
            for (std::size_t m = 0; m < kMelFilters; ++m) {
                double e = 0.0;
                for (const auto& [k, w] : layout.mel[m]) e += w * power_[k];
                log_energy[m] = std::log(e + kLogFloor);
            }
            const auto cep = dct_ii(log_energy);
            for (std::size_t c = 1; c < kCepstralCoefficients; ++c) f[feature_index::kMfcc + c - 1] = cep[c];
            f[feature_index::kMfcc0] = cep[0];
        }

        f[feature_index::kZeroCrossingRate] = zero_crossing_rate(time_frame);

        {
            double mag_total = 0.0;
            for (double m : mag) mag_total += m;
            double rolloff = 0.0;
            if (mag_total > 0.0) {
                const double target = kRollOffFraction * mag_total;
                double acc = 0.0;
                for (std::size_t k = 0; k < bins; ++k) {
                    acc += mag[k];
                    if (acc >= target) {
                        rolloff = spec.frequency(k);
                        break;
                    }
                }
            }
            f[feature_index::kRollOff] = rolloff;
        }

        {
            double centroid = 0.0, spread = 0.0;
            if (total_power > 0.0) {
                double moment = 0.0;
                for (std::size_t k = 0; k < bins; ++k) moment += power_[k] * spec.frequency(k);
                centroid = moment / total_power;
                double var = 0.0;
                for (std::size_t k = 0; k < bins; ++k) {
                    const double d = spec.frequency(k) - centroid;
                    var += power_[k] * d * d;
                }
                spread = std::sqrt(var / total_power);
            }
            f[feature_index::kLinearCentroid] = centroid;
            f[feature_index::kLinearSpread] = spread;
        }
        return f;
    }

    struct DeltaFlux {
        StaticFeatures deltas{};
        double flux = 0.0;
    };

    /// Deltas (late sub-frame minus early sub-frame) and flux of one full frame.
    DeltaFlux delta_and_flux(std::span<const double> frame, const FrameSpec& spec) {
        const std::size_t sub = spec.subframe_length();
        const std::size_t shift = spec.subframe_shift();
        if (frame.size() != spec.frame_length())
            throw DimensionError("frame has " + std::to_string(frame.size()) + " samples, expected " +
                                 std::to_string(spec.frame_length()));
        const auto early_frame = frame.subspan(0, sub);
        const auto late_frame = frame.subspan(shift, sub);
        const SpectrumFrame early = power_spectrum(early_frame);
        const SpectrumFrame late = power_spectrum(late_frame);
        const StaticFeatures fa = static_features(early, early_frame);
        const StaticFeatures fb = static_features(late, late_frame);
        DeltaFlux out;
        for (std::size_t i = 0; i < kStaticFeatureCount; ++i) out.deltas[i] = fb[i] - fa[i];
        for (std::size_t k = 0; k < early.magnitudes.size(); ++k) {
            const double d = late.magnitudes[k] - early.magnitudes[k];
            out.flux += d * d;
        }
        return out;
    }

    FeatureVector frame_features(std::span<const double> frame, const FrameSpec& spec) {
        FeatureVector v{};
        const StaticFeatures s = static_features(power_spectrum(frame), frame);
        std::copy(s.begin(), s.end(), v.begin());
        const DeltaFlux df = delta_and_flux(frame, spec);
        std::copy(df.deltas.begin(), df.deltas.end(), v.begin() + feature_index::kDelta);
        v[feature_index::kFlux] = df.flux;
        return v;
    }

    static double zero_crossing_rate(std::span<const double> x) {
        if (x.size() < 2) return 0.0;
        std::size_t changes = 0;
        for (std::size_t i = 1; i < x.size(); ++i)
            if ((x[i - 1] < 0.0) != (x[i] < 0.0)) ++changes;
        return double(changes) / double(x.size() - 1);
    }

    /// Orthonormal DCT-II.
    template <std::size_t N>
    static std::array<double, N> dct_ii(const std::array<double, N>& x) {
        std::array<double, N> out{};
        for (std::size_t k = 0; k < N; ++k) {
            double acc = 0.0;
            for (std::size_t n = 0; n < N; ++n) acc += x[n] * std::cos(M_PI * double(k) * (double(n) + 0.5) / double(N));
            out[k] = acc * (k == 0 ? std::sqrt(1.0 / N) : std::sqrt(2.0 / N));
        }
        return out;
    }

    static double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
    static double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

    /// Lower edge of quarter-octave band k (0-based); band k spans [edge(k), edge(k+1)).
    static double band_edge_hz(std::size_t k) { return kFlatnessLowEdgeHz * std::exp2(double(k) / 4.0); }

private:
    struct Layout {
        std::array<std::pair<std::size_t, std::size_t>, kFlatnessBands> bands{};
        std::vector<double> octave;
        std::array<std::vector<std::pair<std::size_t, double>>, kMelFilters> mel;
    };

    const FftPlan& plan_for(std::size_t size) {
        auto& p = plans_[size];
        if (!p) p = std::make_unique<FftPlan>(size);
        return *p;
    }

    const std::vector<double>& window_for(std::size_t n) {
        auto& w = windows_[n];
        if (w.empty()) {
            w.resize(n);
            if (n == 1) {
                w[0] = 1.0;
            } else {
                for (std::size_t i = 0; i < n; ++i) w[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * double(i) / double(n - 1));
            }
        }
        return w;
    }

    const Layout& layout_for(std::size_t bins, double bin_hz) {
        auto& slot = layouts_[{bins, bin_hz}];
        if (slot) return *slot;
        slot = std::make_unique<Layout>();
        Layout& l = *slot;
        const double last_hz = double(bins - 1) * bin_hz;

        for (std::size_t b = 0; b < kFlatnessBands; ++b) {
            const double lo = band_edge_hz(b), hi = band_edge_hz(b + 1);
            std::size_t first = bins, end = bins;
            for (std::size_t k = 0; k < bins; ++k) {
                const double f = double(k) * bin_hz;
                if (f >= lo && first == bins) first = k;
                if (f >= hi) {
                    end = k;
                    break;
                }
            }
            if (first >= end) {
                const double centre = std::sqrt(lo * hi);
                const auto nearest = static_cast<std::size_t>(std::llround(std::min(centre, last_hz) / bin_hz));
                first = std::min(nearest, bins - 1);
                end = first + 1;
            }
            l.bands[b] = {first, end};
        }

        l.octave.resize(bins);
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = double(k) * bin_hz;
            l.octave[k] = std::log2((f < kFlatnessLowEdgeHz ? kFlatnessLowEdgeHz / 2.0 : f) / 1000.0);
        }

        const double mel_hi = hz_to_mel(last_hz);
        std::array<double, kMelFilters + 2> centres{};
        for (std::size_t i = 0; i < kMelFilters + 2; ++i)
            centres[i] = mel_to_hz(mel_hi * double(i) / double(kMelFilters + 1));
        for (std::size_t m = 0; m < kMelFilters; ++m) {
            const double left = centres[m], mid = centres[m + 1], right = centres[m + 2];
            for (std::size_t k = 0; k < bins; ++k) {
                const double f = double(k) * bin_hz;
                double w = 0.0;
                if (f > left && f <= mid) w = (f - left) / (mid - left);
                else if (f > mid && f < right) w = (right - f) / (right - mid);
                if (w > 0.0) l.mel[m].emplace_back(k, w);
            }
        }
        return l;
    }

    std::uint32_t rate_;
    std::map<std::size_t, std::unique_ptr<FftPlan>> plans_;
    std::map<std::size_t, std::vector<double>> windows_;
    std::map<std::pair<std::size_t, double>, std::unique_ptr<Layout>> layouts_;
    std::vector<std::complex<double>> buffer_;
    std::vector<double> power_;
};

/// Hamming-windowed, zero-padded magnitude spectrum.
inline SpectrumFrame power_spectrum(std::span<const double> frame, std::uint32_t sample_rate) {
    return FeatureExtractor(sample_rate).power_spectrum(frame);
}

inline StaticFeatures static_features(const SpectrumFrame& spec, std::span<const double> time_frame,
                                      std::uint32_t sample_rate) {
    return FeatureExtractor(sample_rate).static_features(spec, time_frame);
}

inline FeatureExtractor::DeltaFlux delta_and_flux(std::span<const double> frame, const FrameSpec& spec) {
    return FeatureExtractor(spec.sample_rate).delta_and_flux(frame, spec);
}

struct FeatureRow {
    double start_time_s = 0.0;
    double rms = 0.0;
    FeatureVector values{};
};

/// One row per frame of `iterate_frames`. With threads > 1 frames are split
/// into contiguous blocks; row order is the frame order either way.
inline std::vector<FeatureRow> extract_feature_matrix(const MonoSignal& sig, const FrameSpec& spec,
                                                      unsigned threads = 1) {
    if (sig.sample_rate != spec.sample_rate)
        throw InvalidArgumentError("signal rate " + std::to_string(sig.sample_rate) + " Hz differs from frame spec rate " +
                                   std::to_string(spec.sample_rate) + " Hz");
    const auto frames = iterate_frames(sig, spec);
    std::vector<FeatureRow> rows(frames.size());

    auto work = [&](std::size_t begin, std::size_t end) {
        FeatureExtractor fx(spec.sample_rate);
        for (std::size_t i = begin; i < end; ++i) {
            rows[i].start_time_s = double(frames[i].start) / double(spec.sample_rate);
            rows[i].rms = rms(frames[i].samples);
            rows[i].values = fx.frame_features(frames[i].samples, spec);
        }
    };

    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(frames.size())));
    if (threads == 1) {
        work(0, frames.size());
    } else {
        std::vector<std::jthread> pool;
        const std::size_t block = (frames.size() + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            const std::size_t b = t * block, e = std::min(frames.size(), b + block);
            if (b < e) pool.emplace_back(work, b, e);
        }
    }
    return rows;
}

}  // namespace instrec
