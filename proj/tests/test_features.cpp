#include <gtest/gtest.h>

#include <numbers>
#include <set>

#include "instrec.hpp"
#include "oracles.hpp"

using namespace instrec;
namespace fi = instrec::feature_index;

namespace {

constexpr double kPi = std::numbers::pi;

MonoSignal tone(double hz, std::size_t n, std::uint32_t rate = 44100, double amp = 0.5) {
    MonoSignal s{std::vector<double>(n), rate};
    for (std::size_t i = 0; i < n; ++i) s.samples[i] = amp * std::sin(2.0 * kPi * hz * double(i) / rate);
    return s;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
    Engine rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = standard_normal(rng);
    return v;
}

}  // namespace

TEST(Framing, OneSecondGives97Frames) {
    const FrameSpec spec;
    EXPECT_EQ(spec.frame_length(), 1764u);
    EXPECT_EQ(spec.hop_length(), 441u);
    EXPECT_EQ(spec.subframe_length(), 1323u);
    const auto frames = iterate_frames(MonoSignal{std::vector<double>(44100), 44100}, spec);
    ASSERT_EQ(frames.size(), 97u);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        EXPECT_EQ(frames[i].start, i * 441);
        EXPECT_EQ(frames[i].samples.size(), 1764u);
    }
}

TEST(Framing, Boundaries) {
    const FrameSpec spec;
    const auto one = iterate_frames(MonoSignal{std::vector<double>(1764), 44100}, spec);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].start, 0u);
    EXPECT_THROW(iterate_frames(MonoSignal{std::vector<double>(1763), 44100}, spec), TooShortError);
}

TEST(PowerSpectrum, MatchesDirectDft) {
    Engine rng(11);
    for (std::size_t n : {1u, 2u, 3u, 17u, 64u, 100u, 255u, 256u}) {
        std::vector<double> frame(n);
        for (auto& v : frame) v = uniform_range(rng, -1.0, 1.0);
        const SpectrumFrame s = power_spectrum(frame, 8000);
        const std::size_t size = next_pow2(n);
        const auto ref = oracle::dft_magnitudes(frame, size);
        ASSERT_EQ(s.magnitudes.size(), ref.size());
        EXPECT_DOUBLE_EQ(s.bin_hz, 8000.0 / double(size));
        double peak = 0.0;
        for (double m : ref) peak = std::max(peak, m);
        for (std::size_t k = 0; k < ref.size(); ++k)
            EXPECT_NEAR(s.magnitudes[k], ref[k], 1e-6 * std::max(peak, 1.0)) << "n=" << n << " k=" << k;
    }
}

TEST(PowerSpectrum, ZeroFrame) {
    const SpectrumFrame s = power_spectrum(std::vector<double>(1764, 0.0), 44100);
    EXPECT_EQ(s.magnitudes.size(), 1025u);
    for (double m : s.magnitudes) EXPECT_EQ(m, 0.0);
}

TEST(PowerSpectrum, SinusoidAtExactBin) {
    const std::size_t n = 256, bin = 32;
    const MonoSignal t = tone(double(bin) * 8000.0 / n, n, 8000);
    const SpectrumFrame s = power_spectrum(t.samples, 8000);
    EXPECT_EQ(argmax(s.magnitudes), bin);
    // Hamming main lobe is two bins wide on each side
    for (std::size_t k = 0; k < s.magnitudes.size(); ++k) {
        if (k + 2 >= bin && k <= bin + 2) continue;
        EXPECT_LT(20.0 * std::log10(s.magnitudes[k] / s.magnitudes[bin]), -20.0);
    }
}

TEST(PowerSpectrum, DcConcentratesInBinZero) {
    const SpectrumFrame s = power_spectrum(std::vector<double>(1764, 1.0), 44100);
    EXPECT_EQ(argmax(s.magnitudes), 0u);
    double rest = 0.0;
    for (std::size_t k = 3; k < s.magnitudes.size(); ++k) rest = std::max(rest, s.magnitudes[k]);
    EXPECT_LT(20.0 * std::log10(rest / s.magnitudes[0]), -20.0);
}

TEST(StaticFeatures, FlatSpectrumFlatnessIsOne) {
    SpectrumFrame s{std::vector<double>(1025, 0.7), 44100.0 / 2048};
    const StaticFeatures f = static_features(s, std::vector<double>(1764, 0.1), 44100);
    for (std::size_t b = 0; b < kFlatnessBands; ++b) EXPECT_NEAR(f[fi::kFlatness + b], 1.0, 0.05);
}

TEST(StaticFeatures, SingleBinAt1kHz) {
    SpectrumFrame s{std::vector<double>(2206, 0.0), 10.0};
    s.magnitudes[100] = 3.0;
    const StaticFeatures f = static_features(s, std::vector<double>(1764, 0.1), 44100);
    EXPECT_NEAR(f[fi::kLinearCentroid], 1000.0, 1e-9);
    EXPECT_NEAR(f[fi::kLinearSpread], 0.0, 1e-9);
    EXPECT_NEAR(f[fi::kCentroid], 0.0, 1e-12);
    EXPECT_NEAR(f[fi::kSpread], 0.0, 1e-9);
    EXPECT_NEAR(f[fi::kEnergy], std::log10(9.0 + 1e-10), 1e-12);
    EXPECT_EQ(f[fi::kRollOff], 1000.0);
}

TEST(StaticFeatures, AlternatingSignZcrIsOne) {
    std::vector<double> x(1764);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = i % 2 ? -1.0 : 1.0;
    EXPECT_EQ(FeatureExtractor::zero_crossing_rate(x), 1.0);
    const StaticFeatures f = static_features(power_spectrum(x, 44100), x, 44100);
    EXPECT_EQ(f[fi::kZeroCrossingRate], 1.0);
    EXPECT_EQ(FeatureExtractor::zero_crossing_rate(std::vector<double>{1, 2, -1, 0, 3}), 2.0 / 4.0);
}

TEST(StaticFeatures, RollOffOnFlatMagnitudes) {
    const std::size_t bins = 1025;
    const double bin_hz = 44100.0 / 2048;
    SpectrumFrame s{std::vector<double>(bins, 2.0), bin_hz};
    std::size_t expected = 0;
    while (double(expected + 1) < 0.85 * double(bins)) ++expected;
    const StaticFeatures f = static_features(s, std::vector<double>(1764, 0.1), 44100);
    EXPECT_DOUBLE_EQ(f[fi::kRollOff], double(expected) * bin_hz);
}

TEST(Mfcc, DctMatchesOracle) {
    Engine rng(5);
    std::array<double, kMelFilters> x{};
    for (auto& v : x) v = uniform_range(rng, -20, 5);
    const auto got = FeatureExtractor::dct_ii(x);
    const auto ref = oracle::dct_ii(std::vector<double>(x.begin(), x.end()));
    for (std::size_t k = 0; k < kMelFilters; ++k) EXPECT_NEAR(got[k], ref[k], 1e-12);
}

TEST(Mfcc, ConstantLogEnergiesOnlyLevelCoefficient) {
    std::array<double, kMelFilters> x{};
    x.fill(-3.25);
    const auto got = FeatureExtractor::dct_ii(x);
    const auto ref = oracle::dct_ii(std::vector<double>(x.begin(), x.end()));
    EXPECT_NEAR(got[0], ref[0], 1e-12);
    EXPECT_NEAR(got[0], -3.25 * std::sqrt(double(kMelFilters)), 1e-12);
    for (std::size_t k = 1; k < kCepstralCoefficients; ++k) EXPECT_NEAR(got[k], 0.0, 1e-12);
}

TEST(Mfcc, SilentFrameCoefficientsVanish) {
    const std::vector<double> zero(1764, 0.0);
    const StaticFeatures f = static_features(power_spectrum(zero, 44100), zero, 44100);
    for (std::size_t c = 0; c < 12; ++c) EXPECT_NEAR(f[fi::kMfcc + c], 0.0, 1e-9);
    EXPECT_NEAR(f[fi::kMfcc0], std::log(1e-10) * std::sqrt(double(kMelFilters)), 1e-9);
    EXPECT_NEAR(f[fi::kEnergy], -10.0, 1e-12);
}

TEST(DeltaFlux, PeriodicFrameHasNoDeltas) {
    // 100 Hz at 44.1 kHz: period of 441 samples, equal to the sub-frame shift
    std::vector<double> frame(1764);
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = 0.5 * std::sin(2.0 * kPi * double(i % 441) / 441.0);
    const FrameSpec spec;
    const auto df = delta_and_flux(frame, spec);
    const StaticFeatures base = static_features(power_spectrum(std::span(frame).first(1323), 44100),
                                                std::span(frame).first(1323), 44100);
    for (std::size_t i = 0; i < kStaticFeatureCount; ++i)
        EXPECT_NEAR(df.deltas[i], 0.0, 1e-6 * std::max(1.0, std::abs(base[i]))) << feature_names()[i];
    EXPECT_NEAR(df.flux, 0.0, 1e-6);
}

TEST(DeltaFlux, SilenceThenTone) {
    std::vector<double> frame(1764, 0.0);
    for (std::size_t i = 1323; i < frame.size(); ++i) frame[i] = 0.5 * std::sin(2.0 * kPi * 440.0 * double(i) / 44100.0);
    const auto df = delta_and_flux(frame, FrameSpec{});
    EXPECT_GT(df.deltas[fi::kEnergy], 0.0);
    EXPECT_GT(df.flux, 0.0);
}

TEST(DeltaFlux, WrongLength) {
    EXPECT_THROW(delta_and_flux(std::vector<double>(1000), FrameSpec{}), DimensionError);
}

TEST(FeatureVector, RangesOnRandomFrames) {
    FeatureExtractor fx(44100);
    const FrameSpec spec;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto frame = noise(1764, seed);
        if (seed % 2) frame = tone(55.0 * double(seed), 1764).samples;
        const FeatureVector v = fx.frame_features(frame, spec);
        EXPECT_EQ(v.size(), 91u);
        for (double x : v) EXPECT_TRUE(std::isfinite(x));
        for (std::size_t b = 0; b < kFlatnessBands; ++b) {
            EXPECT_GE(v[b], 0.0);
            EXPECT_LE(v[b], 1.0);
        }
        EXPECT_GE(v[fi::kFlux], 0.0);
        EXPECT_GE(v[fi::kLinearSpread], 0.0);
        EXPECT_GE(v[fi::kRollOff], 0.0);
        EXPECT_LE(v[fi::kRollOff], 22050.0);
    }
}

TEST(FeatureVector, AmplitudeScaling) {
    const auto frame = noise(1764, 99);
    auto scaled = frame;
    const double c = 3.7;
    for (auto& x : scaled) x *= c;
    FeatureExtractor fx(44100);
    const FrameSpec spec;
    const FeatureVector a = fx.frame_features(frame, spec);
    const FeatureVector b = fx.frame_features(scaled, spec);
    std::vector<std::size_t> invariant{fi::kCentroid, fi::kSpread, fi::kZeroCrossingRate, fi::kRollOff,
                                       fi::kLinearCentroid, fi::kLinearSpread};
    for (std::size_t i = 0; i < kFlatnessBands; ++i) invariant.push_back(i);
    for (auto i : invariant) EXPECT_TRUE(oracle::close_relative(a[i], b[i], 1e-9)) << feature_names()[i];
    EXPECT_NEAR(b[fi::kEnergy] - a[fi::kEnergy], 2.0 * std::log10(c), 1e-9);
}

TEST(FeatureMatrix, OneSecond) {
    const MonoSignal s = tone(440.0, 44100);
    const auto rows = extract_feature_matrix(s, FrameSpec{});
    ASSERT_EQ(rows.size(), 97u);
    EXPECT_EQ(rows[1].start_time_s, 0.01);
    EXPECT_NEAR(rows[5].rms, 0.5 / std::sqrt(2.0), 1e-3);
    for (const auto& r : rows) EXPECT_EQ(r.values.size(), kFeatureCount);
}

TEST(FeatureMatrix, SilentSignal) {
    const auto rows = extract_feature_matrix(MonoSignal{std::vector<double>(44100), 44100}, FrameSpec{});
    ASSERT_EQ(rows.size(), 97u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.rms, 0.0);
        for (double v : r.values) EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(FeatureMatrix, DeterministicAcrossRunsAndThreads) {
    MonoSignal s{noise(30000, 4), 44100};
    const auto a = extract_feature_matrix(s, FrameSpec{}, 1);
    const auto b = extract_feature_matrix(s, FrameSpec{}, 1);
    const auto c = extract_feature_matrix(s, FrameSpec{}, 4);
    ASSERT_EQ(a.size(), c.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].values, b[i].values);
        EXPECT_EQ(a[i].values, c[i].values);
        EXPECT_EQ(a[i].rms, c[i].rms);
    }
}

TEST(FeatureMatrix, RateMismatch) {
    EXPECT_THROW(extract_feature_matrix(MonoSignal{std::vector<double>(44100), 22050}, FrameSpec{}),
                 InvalidArgumentError);
}

TEST(FeatureNames, LayoutIsStable) {
    const auto& names = feature_names();
    EXPECT_EQ(std::set<std::string>(names.begin(), names.end()).size(), kFeatureCount);
    EXPECT_EQ(names[fi::kFlux], "flux");
    EXPECT_EQ(names[fi::kMfcc0], "mfcc_0");
}
