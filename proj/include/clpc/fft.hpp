#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace clpc {

// In-place iterative radix-2 FFT. Size must be a power of two.
// Inverse transform includes the 1/N scale.
inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse = false) {
    const size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft_radix2: size must be a power of two");

    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = 3.14159265358979323846264338327950288;
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * pi / double(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse) {
        for (auto& x : a) x /= double(n);
    }
}

// One-sided power spectrum of a real frame, zero-padded to fft_size.
// Normalized so a sine of amplitude A at an exact bin contributes A^2
// to its bin (window of length frame.size() assumed rectangular).
inline std::vector<double> power_spectrum(const std::vector<double>& frame, size_t fft_size) {
    std::vector<std::complex<double>> buf(fft_size);
    const size_t n = frame.size() < fft_size ? frame.size() : fft_size;
    for (size_t i = 0; i < n; ++i) buf[i] = frame[i];
    fft_radix2(buf);
    const double norm = 1.0 / double(frame.size());
    std::vector<double> power(fft_size / 2 + 1);
    for (size_t k = 0; k <= fft_size / 2; ++k) {
        const double amp_scale = (k == 0 || k == fft_size / 2) ? norm : 2.0 * norm;
        const double amp = std::abs(buf[k]) * amp_scale;
        power[k] = amp * amp;
    }
    return power;
}

}  // namespace clpc
