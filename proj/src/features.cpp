#include "clpc/features.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "clpc/fft.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace clpc {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr int kWindowSize = 320;  // 20 ms at 16 kHz
constexpr int kFftSize = 512;
constexpr double kEnergyFloor = 1e-10;

double bark_of_hz(double f) { return 26.81 * f / (1960.0 + f) - 0.53; }
double hz_of_bark(double z) { return 1960.0 * (z + 0.53) / (26.81 - (z + 0.53)); }
}  // namespace

const BarkFilterbank& BarkFilterbank::instance() {
    static const BarkFilterbank fb = [] {
        BarkFilterbank b;
        const double z_lo = bark_of_hz(0.0);
        const double z_hi = bark_of_hz(8000.0);
        for (int i = 0; i < kNumBands + 2; ++i) {
            const double z = z_lo + (z_hi - z_lo) * double(i) / double(kNumBands + 1);
            b.edge_hz[size_t(i)] = hz_of_bark(z);
        }
        b.edge_hz[0] = 0.0;
        b.edge_hz[kNumBands + 1] = 8000.0;
        for (int i = 0; i < kNumBands; ++i) b.center_hz[size_t(i)] = b.edge_hz[size_t(i) + 1];
        return b;
    }();
    return fb;
}

std::array<double, kNumBands> BarkFilterbank::apply(const std::vector<double>& power,
                                                    double bin_hz) const {
    std::array<double, kNumBands> bands{};
    for (int i = 0; i < kNumBands; ++i) {
        const double lo = edge_hz[size_t(i)];
        const double mid = edge_hz[size_t(i) + 1];
        const double hi = edge_hz[size_t(i) + 2];
        double acc = 0.0, wsum = 0.0;
        for (size_t k = 0; k < power.size(); ++k) {
            const double f = double(k) * bin_hz;
            double w = 0.0;
            if (f >= lo && f <= mid && mid > lo)
                w = (f - lo) / (mid - lo);
            else if (f > mid && f <= hi && hi > mid)
                w = (hi - f) / (hi - mid);
            if (w > 0.0) {
                acc += w * power[k];
                wsum += w;
            }
        }
        // normalized mean keeps a flat spectrum flat across bands; the 128
        // (= fft bins / 4) calibrates the density so the autocorrelation
        // reconstructed from these bands has r[0] near the frame mean square
        bands[size_t(i)] = wsum > 0.0 ? 128.0 * acc / wsum : 0.0;
    }
    return bands;
}

std::array<double, kNumBands> dct18(const std::array<double, kNumBands>& in) {
    std::array<double, kNumBands> out{};
    for (int j = 0; j < kNumBands; ++j) {
        double acc = 0.0;
        for (int i = 0; i < kNumBands; ++i)
            acc += in[size_t(i)] * std::cos(kPi * (double(i) + 0.5) * double(j) / kNumBands);
        const double scale = j == 0 ? std::sqrt(1.0 / kNumBands) : std::sqrt(2.0 / kNumBands);
        out[size_t(j)] = acc * scale;
    }
    return out;
}

std::array<double, kNumBands> idct18(const std::array<double, kNumBands>& in) {
    std::array<double, kNumBands> out{};
    for (int i = 0; i < kNumBands; ++i) {
        double acc = 0.0;
        for (int j = 0; j < kNumBands; ++j) {
            const double scale = j == 0 ? std::sqrt(1.0 / kNumBands) : std::sqrt(2.0 / kNumBands);
            acc += scale * in[size_t(j)] * std::cos(kPi * (double(i) + 0.5) * double(j) / kNumBands);
        }
        out[size_t(i)] = acc;
    }
    return out;
}

std::array<double, kNumBands> bfcc(const std::vector<double>& window, int sample_rate) {
    if (int(window.size()) != kWindowSize)
        throw std::invalid_argument("bfcc: expected a 320-sample window");

    std::vector<double> tapered(window.size());
    for (size_t j = 0; j < window.size(); ++j)
        tapered[j] = window[j] * (0.5 - 0.5 * std::cos(2.0 * kPi * double(j) / kWindowSize));

    const auto power = power_spectrum(tapered, kFftSize);
    const double bin_hz = double(sample_rate) / kFftSize;
    auto bands = BarkFilterbank::instance().apply(power, bin_hz);

    std::array<double, kNumBands> logs{};
    for (int i = 0; i < kNumBands; ++i)
        logs[size_t(i)] = std::log(bands[size_t(i)] + kEnergyFloor);
    return dct18(logs);
}

std::array<double, kNumBands> band_energies(const std::array<double, kNumBands>& coeffs) {
    auto logs = idct18(coeffs);
    std::array<double, kNumBands> out{};
    for (int i = 0; i < kNumBands; ++i) out[size_t(i)] = std::exp(logs[size_t(i)]);
    return out;
}

namespace {

template <bool Parallel>
std::vector<std::array<double, kNumBands>> bfcc_frames_impl(const AudioBuffer& audio) {
    const size_t frames = (audio.samples.size() + size_t(kHop) - 1) / size_t(kHop);
    std::vector<std::array<double, kNumBands>> out(frames);
    const long n = long(audio.samples.size());

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (Parallel)
#endif
    for (long long t = 0; t < (long long)frames; ++t) {
        const long start = long(t) * kHop + kHop / 2 - kWindowSize / 2;
        std::vector<double> window(size_t(kWindowSize), 0.0);
        for (int i = 0; i < kWindowSize; ++i) {
            const long idx = start + i;
            if (idx >= 0 && idx < n) window[size_t(i)] = audio.samples[size_t(idx)];
        }
        out[size_t(t)] = bfcc(window, audio.sample_rate);
    }
    return out;
}

}  // namespace

std::vector<std::array<double, kNumBands>> bfcc_frames(const AudioBuffer& audio, bool parallel) {
    if (parallel) return bfcc_frames_impl<true>(audio);
    return bfcc_frames_impl<false>(audio);
}

std::vector<std::array<double, kNumBands>> bfcc_frames_serial(const AudioBuffer& audio) {
    return bfcc_frames_impl<false>(audio);
}

std::vector<FeatureFrame> extract_features(const AudioBuffer& audio, const PitchContour& contour,
                                           const FeatureOptions& opt) {
    const auto coeffs = bfcc_frames(audio, opt.parallel);
    if (contour.frames() != coeffs.size())
        throw std::invalid_argument("extract_features: contour length does not match frame count");

    Rng rng(opt.seed);
    std::vector<FeatureFrame> frames(coeffs.size());
    for (size_t t = 0; t < coeffs.size(); ++t) {
        frames[t].bfcc = coeffs[t];
        frames[t].pitch_bin = quantize_pitch(dither(contour.f0_hz[t], rng, opt.dither_width_cents));
        frames[t].periodicity = contour.periodicity[t];
    }
    return frames;
}

// --- Feature file ------------------------------------------------------------------

namespace {
constexpr char kFeatureMagic[8] = {'C', 'L', 'P', 'C', 'F', 'E', 'A', 'T'};
constexpr uint32_t kFeatureVersion = 1;
}  // namespace

void save_features(const std::vector<FeatureFrame>& frames, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(kFeatureMagic, 8);
    const uint32_t version = kFeatureVersion;
    const uint32_t count = uint32_t(frames.size());
    f.write(reinterpret_cast<const char*>(&version), 4);
    f.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& frame : frames) {
        for (double c : frame.bfcc) {
            const float v = float(c);
            f.write(reinterpret_cast<const char*>(&v), 4);
        }
        const uint8_t bin = uint8_t(frame.pitch_bin);
        f.write(reinterpret_cast<const char*>(&bin), 1);
        const float p = float(frame.periodicity);
        f.write(reinterpret_cast<const char*>(&p), 4);
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<FeatureFrame> load_features(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kFeatureMagic, 8) != 0)
        throw std::runtime_error("not a feature file: " + path);
    uint32_t version = 0, count = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&count), 4);
    if (!f || version != kFeatureVersion)
        throw std::runtime_error("unsupported feature file version: " + path);

    std::vector<FeatureFrame> frames(count);
    for (auto& frame : frames) {
        for (double& c : frame.bfcc) {
            float v = 0;
            f.read(reinterpret_cast<char*>(&v), 4);
            c = double(v);
        }
        uint8_t bin = 0;
        f.read(reinterpret_cast<char*>(&bin), 1);
        frame.pitch_bin = bin;
        float p = 0;
        f.read(reinterpret_cast<char*>(&p), 4);
        frame.periodicity = double(p);
    }
    if (!f) throw std::runtime_error("truncated feature file: " + path);
    return frames;
}

void save_features_csv(const std::vector<FeatureFrame>& frames, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "frame";
    for (int i = 0; i < kNumBands; ++i) f << ",bfcc" << i;
    f << ",pitch_bin,periodicity\n";
    for (size_t t = 0; t < frames.size(); ++t) {
        f << t;
        for (double c : frames[t].bfcc) f << ',' << c;
        f << ',' << frames[t].pitch_bin << ',' << frames[t].periodicity << '\n';
    }
}

}  // namespace clpc
