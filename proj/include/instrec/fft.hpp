#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace instrec {

constexpr std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

/// Iterative radix-2 FFT of a fixed power-of-two size.
class FftPlan {
public:
    explicit FftPlan(std::size_t size) : size_(size), twiddles_(size / 2), reversed_(size) {
        if (size == 0 || (size & (size - 1)) != 0) throw std::invalid_argument("FFT size must be a power of two");
        for (std::size_t k = 0; k < size / 2; ++k) {
            const double a = -2.0 * M_PI * double(k) / double(size);
            twiddles_[k] = {std::cos(a), std::sin(a)};
        }
        std::size_t bits = 0;
        while ((std::size_t{1} << bits) < size) ++bits;
        for (std::size_t i = 0; i < size; ++i) {
            std::size_t r = 0;
            for (std::size_t b = 0; b < bits; ++b)
                if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
            reversed_[i] = r;
        }
    }

    std::size_t size() const { return size_; }

    /// In-place forward transform (no normalization).
    void forward(std::span<std::complex<double>> data) const {
        for (std::size_t i = 0; i < size_; ++i)
            if (i < reversed_[i]) std::swap(data[i], data[reversed_[i]]);
        for (std::size_t len = 2; len <= size_; len <<= 1) {
            const std::size_t half = len / 2;
            const std::size_t stride = size_ / len;
            for (std::size_t start = 0; start < size_; start += len) {
                for (std::size_t k = 0; k < half; ++k) {
                    const auto w = twiddles_[k * stride];
                    const auto x = data[start + k + half];
                    // plain product; std::complex operator* adds NaN recovery
                    const std::complex<double> t{w.real() * x.real() - w.imag() * x.imag(),
                                                 w.real() * x.imag() + w.imag() * x.real()};
                    data[start + k + half] = data[start + k] - t;
                    data[start + k] += t;
                }
            }
        }
    }

private:
    std::size_t size_;
    std::vector<std::complex<double>> twiddles_;
    std::vector<std::size_t> reversed_;
};

}  // namespace instrec
