#include "clpc/lpc.hpp"

#include <cmath>
#include <stdexcept>

namespace clpc {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr int kSpecSize = 512;          // reconstruction FFT grid
constexpr double kLagWindowHz = 40.0;   // Gaussian lag window bandwidth
constexpr double kMuLawDenom = 5.545177444479562;  // ln(256)
}  // namespace

std::array<double, kLpcOrder + 1> bfcc_to_autocorr(const std::array<double, kNumBands>& coeffs) {
    const auto bands = band_energies(coeffs);
    const auto& fb = BarkFilterbank::instance();

    // piecewise-linear power spectrum between band centers, flat at the ends
    const double bin_hz = 16000.0 / kSpecSize;
    std::array<double, kSpecSize / 2 + 1> spectrum{};
    for (int k = 0; k <= kSpecSize / 2; ++k) {
        const double f = double(k) * bin_hz;
        double value;
        if (f <= fb.center_hz[0]) {
            value = bands[0];
        } else if (f >= fb.center_hz[kNumBands - 1]) {
            value = bands[kNumBands - 1];
        } else {
            int i = 0;
            while (i + 1 < kNumBands && fb.center_hz[size_t(i) + 1] < f) ++i;
            const double lo = fb.center_hz[size_t(i)];
            const double hi = fb.center_hz[size_t(i) + 1];
            const double frac = (f - lo) / (hi - lo);
            value = (1.0 - frac) * bands[size_t(i)] + frac * bands[size_t(i) + 1];
        }
        spectrum[size_t(k)] = value;
    }

    // first 17 lags of the inverse transform of the symmetric power spectrum
    std::array<double, kLpcOrder + 1> r{};
    for (int k = 0; k <= kLpcOrder; ++k) {
        double acc = spectrum[0];
        for (int j = 1; j < kSpecSize / 2; ++j)
            acc += 2.0 * spectrum[size_t(j)] * std::cos(2.0 * kPi * double(j) * k / kSpecSize);
        acc += spectrum[kSpecSize / 2] * std::cos(kPi * double(k));
        r[size_t(k)] = acc / double(kSpecSize);
    }

    // Gaussian lag window guards against ill-conditioning from the coarse bands
    for (int k = 1; k <= kLpcOrder; ++k) {
        const double w = 2.0 * kPi * kLagWindowHz * double(k) / 16000.0;
        r[size_t(k)] *= std::exp(-0.5 * w * w);
    }
    r[0] *= 1.0 + 1e-9;
    return r;
}

LpcFrame levinson_durbin(std::span<const double> r, int order) {
    if (order < 1 || int(r.size()) < order + 1)
        throw std::invalid_argument("levinson_durbin: need order+1 lags");
    for (double v : r)
        if (!std::isfinite(v)) throw std::runtime_error("invalid autocorrelation");
    if (r[0] <= 0.0) throw std::runtime_error("invalid autocorrelation");
    if (order > kLpcOrder) throw std::invalid_argument("levinson_durbin: order exceeds 16");

    LpcFrame frame;
    double error = r[0];
    std::array<double, kLpcOrder> a{};
    std::array<double, kLpcOrder> prev{};

    for (int m = 1; m <= order; ++m) {
        double acc = r[size_t(m)];
        for (int i = 1; i < m; ++i) acc -= a[size_t(i) - 1] * r[size_t(m - i)];
        double k = error > 1e-300 ? acc / error : 0.0;
        if (!(k > -1.0 && k < 1.0)) {
            k = k >= 1.0 ? 1.0 - 1e-9 : -(1.0 - 1e-9);
            frame.clamped = true;
        }
        prev = a;
        a[size_t(m) - 1] = k;
        for (int i = 1; i < m; ++i)
            a[size_t(i) - 1] = prev[size_t(i) - 1] - k * prev[size_t(m - i) - 1];
        error *= 1.0 - k * k;
    }

    frame.a = a;
    frame.gain = error;
    return frame;
}

double predict(std::span<const double> history, const std::array<double, kLpcOrder>& a) {
    double p = 0.0;
    const size_t n = std::min(history.size(), size_t(kLpcOrder));
    for (size_t i = 0; i < n; ++i) p += a[i] * history[i];
    return p;
}

LpcFrame lpc_from_bfcc(const std::array<double, kNumBands>& coeffs) {
    const auto r = bfcc_to_autocorr(coeffs);
    return levinson_durbin(std::span<const double>(r.data(), r.size()), kLpcOrder);
}

// --- mu-law codec --------------------------------------------------------------

// Level spacing is 1/128 below zero and 1/127 above so that codes 0, 128 and
// 255 decode exactly to -1, 0 and +1.

int mulaw_encode(double x) {
    x = std::min(1.0, std::max(-1.0, x));
    const double y = std::copysign(std::log1p(255.0 * std::abs(x)) / kMuLawDenom, x);
    const double scale = y >= 0.0 ? 127.0 : 128.0;
    const long code = std::lround(128.0 + scale * y);
    return int(std::min(255L, std::max(0L, code)));
}

double mulaw_decode(int code) {
    code = std::min(255, std::max(0, code));
    const double y = code >= 128 ? double(code - 128) / 127.0 : double(code - 128) / 128.0;
    const double mag = (std::exp(std::abs(y) * kMuLawDenom) - 1.0) / 255.0;
    return std::copysign(mag, y);
}

}  // namespace clpc
