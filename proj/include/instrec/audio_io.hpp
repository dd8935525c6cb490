#pragma once

// WAV decoding and the signal preparation steps applied before feature
// extraction: stereo mixdown, silence trimming and RMS normalization.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "instrec/binary_io.hpp"
#include "instrec/error.hpp"

namespace instrec {

/// Decoded PCM audio. `channels[c][i]` is sample i of channel c.
struct AudioClip {
    std::vector<std::vector<double>> channels;
    std::uint32_t sample_rate = 0;

    std::size_t channel_count() const { return channels.size(); }
    std::size_t frames() const { return channels.empty() ? 0 : channels.front().size(); }
};

struct MonoSignal {
    std::vector<double> samples;
    std::uint32_t sample_rate = 0;

    std::size_t size() const { return samples.size(); }
    double duration_s() const { return sample_rate ? double(samples.size()) / sample_rate : 0.0; }
    bool operator==(const MonoSignal&) const = default;
};

/// Default amplitude below which leading/trailing samples count as silence (-80 dBFS).
inline constexpr double kDefaultSilenceThreshold = 1e-4;

inline double rms(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc / double(x.size()));
}

namespace detail {

inline std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t at) {
    return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
           std::uint32_t(b[at + 3]) << 24;
}

inline std::uint16_t le16(std::span<const std::uint8_t> b, std::size_t at) {
    return std::uint16_t(b[at] | b[at + 1] << 8);
}

inline bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
    return b[at] == tag[0] && b[at + 1] == tag[1] && b[at + 2] == tag[2] && b[at + 3] == tag[3];
}

}  // namespace detail

/// Decodes a RIFF/WAVE container holding 16-bit PCM or 32-bit IEEE float
/// samples, mono or stereo. 16-bit samples are scaled by 1/32768.
inline AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
    using detail::le16;
    using detail::le32;
    using detail::tag_is;

    if (bytes.size() < 12) throw DecodeError("truncated RIFF header at offset 0");
    if (!tag_is(bytes, 0, "RIFF")) throw DecodeError("missing RIFF tag at offset 0");
    if (!tag_is(bytes, 8, "WAVE")) throw DecodeError("missing WAVE tag at offset 8");

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::size_t pos = 12;
    while (true) {
        if (pos + 8 > bytes.size()) {
            if (!have_fmt) throw DecodeError("no fmt chunk before end of file at offset " + std::to_string(pos));
            throw DecodeError("no data chunk before end of file at offset " + std::to_string(pos));
        }
        const std::uint32_t size = le32(bytes, pos + 4);
        const std::size_t body = pos + 8;
        if (size > bytes.size() - body)
            throw DecodeError("chunk at offset " + std::to_string(pos) + " declares " + std::to_string(size) +
                              " bytes but only " + std::to_string(bytes.size() - body) + " remain");

        if (tag_is(bytes, pos, "fmt ")) {
            if (size < 16) throw DecodeError("fmt chunk too small at offset " + std::to_string(pos));
            format = le16(bytes, body);
            channels = le16(bytes, body + 2);
            rate = le32(bytes, body + 4);
            bits = le16(bytes, body + 14);
            if (format == 0xFFFE) {
                if (size < 40) throw DecodeError("extensible fmt chunk too small at offset " + std::to_string(pos));
                format = le16(bytes, body + 24);
            }
            have_fmt = true;
        } else if (tag_is(bytes, pos, "data")) {
            if (!have_fmt) throw DecodeError("data chunk before fmt chunk at offset " + std::to_string(pos));
            const bool pcm16 = format == 1 && bits == 16;
            const bool float32 = format == 3 && bits == 32;
            if (!pcm16 && !float32)
                throw UnsupportedFormatError("format tag " + std::to_string(format) + " with " +
                                             std::to_string(bits) + " bits per sample");
            if (channels != 1 && channels != 2)
                throw UnsupportedFormatError(std::to_string(channels) + " channels");
            if (rate == 0) throw DecodeError("zero sample rate in fmt chunk");

            const std::size_t width = bits / 8 * channels;
            if (size % width != 0)
                throw DecodeError("data chunk at offset " + std::to_string(pos) + " holds a partial sample frame");
            const std::size_t n = size / width;

            AudioClip clip;
            clip.sample_rate = rate;
            clip.channels.assign(channels, std::vector<double>(n));
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::size_t at = body + i * width + c * (bits / 8);
                    if (pcm16) {
                        clip.channels[c][i] = double(std::int16_t(le16(bytes, at))) / 32768.0;
                    } else {
                        clip.channels[c][i] = double(std::bit_cast<float>(le32(bytes, at)));
                    }
                }
            }
            return clip;
        }
        pos = body + size + (size & 1u);
    }
}

enum class WavEncoding { Pcm16, Float32 };

/// Encodes a clip as a canonical 44-byte-header WAV file. 16-bit samples are
/// rounded from x * 32768 and clamped to the int16 range.
inline Bytes encode_wav(const AudioClip& clip, WavEncoding enc = WavEncoding::Pcm16) {
    const std::uint16_t channels = static_cast<std::uint16_t>(clip.channel_count());
    const std::uint16_t bits = enc == WavEncoding::Pcm16 ? 16 : 32;
    const std::uint32_t data_size = static_cast<std::uint32_t>(clip.frames() * channels * (bits / 8));

    ByteWriter w;
    w.magic("RIFF");
    w.u32(36 + data_size);
    w.magic("WAVEfmt ");
    w.u32(16);
    const std::uint16_t tag = enc == WavEncoding::Pcm16 ? 1 : 3;
    w.u8(tag & 0xFF);
    w.u8(tag >> 8);
    w.u8(channels & 0xFF);
    w.u8(channels >> 8);
    w.u32(clip.sample_rate);
    w.u32(clip.sample_rate * channels * (bits / 8));
    const std::uint16_t align = channels * (bits / 8);
    w.u8(align & 0xFF);
    w.u8(align >> 8);
    w.u8(bits & 0xFF);
    w.u8(bits >> 8);
    w.magic("data");
    w.u32(data_size);
    for (std::size_t i = 0; i < clip.frames(); ++i) {
        for (const auto& ch : clip.channels) {
            if (enc == WavEncoding::Pcm16) {
                const double s = std::clamp(std::nearbyint(ch[i] * 32768.0), -32768.0, 32767.0);
                const auto v = static_cast<std::uint16_t>(static_cast<std::int16_t>(s));
                w.u8(v & 0xFF);
                w.u8(v >> 8);
            } else {
                w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(ch[i])));
            }
        }
    }
    return std::move(w).bytes();
}

inline AudioClip load_wav(const std::string& path) { return decode_wav(read_file(path)); }

/// Stereo is reduced to the per-sample mean of both channels; mono passes through.
inline MonoSignal mixdown_mono(const AudioClip& clip) {
    MonoSignal out;
    out.sample_rate = clip.sample_rate;
    if (clip.channel_count() == 1) {
        out.samples = clip.channels[0];
    } else if (clip.channel_count() == 2) {
        const auto& l = clip.channels[0];
        const auto& r = clip.channels[1];
        if (l.size() != r.size()) throw InvalidArgumentError("stereo channels differ in length");
        out.samples.resize(l.size());
        for (std::size_t i = 0; i < l.size(); ++i) out.samples[i] = (l[i] + r[i]) / 2.0;
    } else {
        throw UnsupportedFormatError(std::to_string(clip.channel_count()) + " channels");
    }
    return out;
}

/// Removes the leading and trailing runs of samples with |x| <= threshold.
inline MonoSignal trim_silence(const MonoSignal& sig, double threshold = kDefaultSilenceThreshold) {
    if (threshold < 0) throw InvalidArgumentError("negative silence threshold");
    const auto& s = sig.samples;
    std::size_t first = 0;
    while (first < s.size() && std::abs(s[first]) <= threshold) ++first;
    if (first == s.size()) throw EmptySignalError("signal is silent at threshold " + std::to_string(threshold));
    std::size_t last = s.size();
    while (std::abs(s[last - 1]) <= threshold) --last;
    MonoSignal out;
    out.sample_rate = sig.sample_rate;
    out.samples.assign(s.begin() + std::ptrdiff_t(first), s.begin() + std::ptrdiff_t(last));
    return out;
}

/// Scales the signal so that its RMS equals one.
inline MonoSignal normalize_rms(const MonoSignal& sig) {
    const double r = rms(sig.samples);
    if (!(r > 0.0)) throw DegenerateSignalError("cannot normalize a zero-RMS signal");
    MonoSignal out = sig;
    const double gain = 1.0 / r;
    for (double& v : out.samples) v *= gain;
    return out;
}

}  // namespace instrec
