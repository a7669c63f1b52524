#include "clpc/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace clpc {

double peak_abs(const AudioBuffer& x) {
    double peak = 0.0;
    for (double s : x.samples) peak = std::max(peak, std::abs(s));
    return peak;
}

// --- Resampler ---------------------------------------------------------------

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

double bessel_i0(double x) {
    // power series; converges fast for the beta values used here
    double sum = 1.0, term = 1.0;
    const double half_sq = 0.25 * x * x;
    for (int k = 1; k < 64; ++k) {
        term *= half_sq / (double(k) * k);
        sum += term;
        if (term < 1e-14 * sum) break;
    }
    return sum;
}

double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    const double px = kPi * x;
    return std::sin(px) / px;
}

// Kaiser window shape sampled on |u|/half_width in [0, 1]; shared lookup
// avoids a Bessel evaluation per tap.
const std::vector<double>& kaiser_table() {
    static const std::vector<double> table = [] {
        constexpr int kEntries = 8193;
        constexpr double beta = 8.6;
        std::vector<double> t(kEntries);
        const double i0_beta = bessel_i0(beta);
        for (int i = 0; i < kEntries; ++i) {
            const double frac = double(i) / double(kEntries - 1);
            t[size_t(i)] = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - frac * frac))) / i0_beta;
        }
        return t;
    }();
    return table;
}

double kaiser_lookup(double frac) {
    const auto& table = kaiser_table();
    const double pos = std::min(1.0, std::abs(frac)) * double(table.size() - 1);
    const size_t idx = size_t(pos);
    if (idx + 1 >= table.size()) return table.back();
    const double blend = pos - double(idx);
    return table[idx] * (1.0 - blend) + table[idx + 1] * blend;
}

template <bool Parallel>
std::vector<double> resample_kernel(const std::vector<double>& x, double from, double to) {
    const double ratio = to / from;
    const long long out_n = llround(double(x.size()) * ratio);
    std::vector<double> y(size_t(out_n), 0.0);

    // Transition band centered at the lower Nyquist; 64 taps per phase.
    const double shrink = std::min(1.0, ratio);
    const double cutoff = 0.5 * shrink;       // cycles per input sample
    const double half_width = 32.0 / shrink;  // input samples each side
    const long long n = (long long)x.size();
    kaiser_table();  // build the shared table before the parallel region

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (Parallel)
#endif
    for (long long i = 0; i < out_n; ++i) {
        const double t = double(i) / ratio;
        long long k0 = (long long)std::ceil(t - half_width);
        long long k1 = (long long)std::floor(t + half_width);
        k0 = std::max<long long>(k0, 0);
        k1 = std::min(k1, n - 1);
        double acc = 0.0, wsum = 0.0;
        for (long long k = k0; k <= k1; ++k) {
            const double u = t - double(k);
            const double win = kaiser_lookup(u / half_width);
            const double w = 2.0 * cutoff * sinc(2.0 * cutoff * u) * win;
            acc += w * x[size_t(k)];
            wsum += w;
        }
        y[size_t(i)] = wsum > 1e-12 ? acc / wsum : 0.0;
    }
    return y;
}

}  // namespace

AudioBuffer resample_from(const std::vector<double>& samples, double from_rate, int to_rate) {
    if (from_rate <= 0.0 || to_rate <= 0) throw std::invalid_argument("invalid sample rate");
    AudioBuffer out;
    out.sample_rate = to_rate;
    if (samples.empty()) return out;
    if (std::abs(from_rate - double(to_rate)) < 1e-9) {
        out.samples = samples;
        return out;
    }
    out.samples = resample_kernel<true>(samples, from_rate, double(to_rate));
    return out;
}

AudioBuffer resample(const AudioBuffer& x, int to_rate) {
    return resample_from(x.samples, double(x.sample_rate), to_rate);
}

AudioBuffer resample_serial(const AudioBuffer& x, int to_rate) {
    if (x.sample_rate <= 0 || to_rate <= 0) throw std::invalid_argument("invalid sample rate");
    AudioBuffer out;
    out.sample_rate = to_rate;
    if (x.samples.empty()) return out;
    if (x.sample_rate == to_rate) {
        out.samples = x.samples;
        return out;
    }
    out.samples = resample_kernel<false>(x.samples, double(x.sample_rate), double(to_rate));
    return out;
}

// --- Butterworth high-pass ---------------------------------------------------

namespace {

struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0;  // numerator
    double a1 = 0, a2 = 0;          // denominator (a0 = 1)
};

struct HighpassDesign {
    Biquad sections[3];  // two conjugate-pair biquads + one first-order section
};

// 5th-order Butterworth high-pass at 65 Hz / 16 kHz via bilinear transform,
// factored into second-order sections.
HighpassDesign design_highpass(double cutoff_hz, double sample_rate) {
    using cd = std::complex<double>;
    const int order = 5;
    const double warped = std::tan(kPi * cutoff_hz / sample_rate);

    // lowpass prototype poles on the unit circle, left half-plane
    std::vector<cd> hp_poles;
    for (int k = 1; k <= order; ++k) {
        const double theta = kPi * (2.0 * k + order - 1.0) / (2.0 * order);
        const cd proto(std::cos(theta), std::sin(theta));
        hp_poles.push_back(warped / proto);  // LP -> HP: s -> warped/s
    }

    auto to_z = [](cd s) { return (1.0 + s) / (1.0 - s); };

    HighpassDesign d;
    // conjugate pairs: poles k=1..2 pair with k=5..4; k=3 is real
    for (int i = 0; i < 2; ++i) {
        const cd zp = to_z(hp_poles[size_t(i)]);
        d.sections[i].b0 = 1.0;
        d.sections[i].b1 = -2.0;
        d.sections[i].b2 = 1.0;
        d.sections[i].a1 = -2.0 * zp.real();
        d.sections[i].a2 = std::norm(zp);
    }
    const cd zr = to_z(hp_poles[2]);
    d.sections[2].b0 = 1.0;
    d.sections[2].b1 = -1.0;
    d.sections[2].b2 = 0.0;
    d.sections[2].a1 = -zr.real();
    d.sections[2].a2 = 0.0;

    // normalize to unit gain at Nyquist (z = -1)
    double gain = 1.0;
    for (const auto& s : d.sections) {
        const double num = s.b0 - s.b1 + s.b2;
        const double den = 1.0 - s.a1 + s.a2;
        gain *= num / den;
    }
    d.sections[0].b0 /= gain;
    d.sections[0].b1 /= gain;
    d.sections[0].b2 /= gain;
    return d;
}

void run_biquad(const Biquad& q, std::vector<double>& x) {
    // direct form II transposed
    double s1 = 0.0, s2 = 0.0;
    for (double& v : x) {
        const double in = v;
        const double out = q.b0 * in + s1;
        s1 = q.b1 * in - q.a1 * out + s2;
        s2 = q.b2 * in - q.a2 * out;
        v = out;
    }
}

}  // namespace

AudioBuffer highpass(const AudioBuffer& x) {
    const HighpassDesign design = design_highpass(65.0, double(x.sample_rate));
    AudioBuffer out = x;
    for (const auto& section : design.sections) run_biquad(section, out.samples);
    return out;
}

// --- Pre/deemphasis ------------------------------------------------------------

AudioBuffer preemphasis(const AudioBuffer& x, double coef) {
    if (std::abs(coef) >= 1.0) throw std::invalid_argument("preemphasis coef must be in (-1, 1)");
    AudioBuffer out = x;
    double prev = 0.0;
    for (double& v : out.samples) {
        const double cur = v;
        v = cur - coef * prev;
        prev = cur;
    }
    return out;
}

AudioBuffer deemphasis(const AudioBuffer& y, double coef) {
    if (std::abs(coef) >= 1.0) throw std::invalid_argument("deemphasis coef must be in (-1, 1)");
    AudioBuffer out = y;
    double prev = 0.0;
    for (double& v : out.samples) {
        v = v + coef * prev;
        prev = v;
    }
    return out;
}

// --- Limiter --------------------------------------------------------------------

AudioBuffer limit(const AudioBuffer& x) {
    constexpr double kThreshold = 0.99;
    const int attack = std::max(1, x.sample_rate / 1000);         // 1 ms
    const int release = std::max(1, x.sample_rate / 10);          // 100 ms
    const double release_coef = std::exp(-1.0 / double(release));

    const size_t n = x.samples.size();
    AudioBuffer out = x;
    if (n == 0) return out;

    // instantaneous required gain, with a slow-release floor
    std::vector<double> need(n);
    double rel = 1.0;
    for (size_t t = 0; t < n; ++t) {
        const double mag = std::abs(x.samples[t]);
        const double raw = mag > kThreshold ? kThreshold / mag : 1.0;
        rel = std::min(raw, 1.0 - (1.0 - rel) * release_coef);
        need[t] = rel;
    }

    // look-ahead minimum over the attack window, then a trailing average of
    // the same length; every averaged term still covers sample t, so the
    // smoothed gain never exceeds the instantaneous requirement.
    std::vector<double> floor_gain(n);
    for (size_t t = 0; t < n; ++t) {
        double m = need[t];
        const size_t hi = std::min(n, t + size_t(attack));
        for (size_t u = t + 1; u < hi; ++u) m = std::min(m, need[u]);
        floor_gain[t] = m;
    }
    double acc = 0.0;
    for (size_t t = 0; t < n; ++t) {
        acc += floor_gain[t];
        if (t >= size_t(attack)) acc -= floor_gain[t - size_t(attack)];
        const double len = double(std::min(t + 1, size_t(attack)));
        out.samples[t] = x.samples[t] * (acc / len);
    }
    return out;
}

// --- Quiet-signal normalization ---------------------------------------------------

AudioBuffer normalize_quiet(const AudioBuffer& x) {
    const double peak = peak_abs(x);
    if (peak < 1e-12 || peak >= 0.2) return x;
    AudioBuffer out = x;
    const double g = 0.4 / peak;
    for (double& v : out.samples) v *= g;
    return out;
}

AudioBuffer preprocess(const AudioBuffer& x, const PreprocessOptions& opt) {
    AudioBuffer y = resample(x, opt.sample_rate);
    if (opt.apply_highpass) y = highpass(y);
    y = normalize_quiet(y);
    y = preemphasis(y, opt.preemphasis_coef);
    return limit(y);
}

}  // namespace clpc
