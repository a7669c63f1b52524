#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "clpc/audio.hpp"
#include "test_util.hpp"

using namespace clpc;
using namespace testutil;

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/clpc_audio_test_") + name;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double max_second_difference(const std::vector<double>& x) {
    double m = 0.0;
    for (size_t i = 2; i < x.size(); ++i)
        m = std::max(m, std::abs(x[i] - 2.0 * x[i - 1] + x[i - 2]));
    return m;
}

double band_energy_db(const AudioBuffer& x, double lo_hz, double hi_hz) {
    size_t fft_size = 1;
    while (fft_size < x.samples.size()) fft_size <<= 1;
    std::vector<std::complex<double>> buf(fft_size);
    for (size_t i = 0; i < x.samples.size(); ++i) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * double(i) / double(x.samples.size()));
        buf[i] = x.samples[i] * w;
    }
    fft_radix2(buf);
    double acc = 0.0;
    for (size_t k = 0; k < fft_size / 2; ++k) {
        const double f = double(k) * x.sample_rate / double(fft_size);
        if (f >= lo_hz && f < hi_hz) acc += std::norm(buf[k]);
    }
    return 10.0 * std::log10(acc + 1e-300);
}

}  // namespace

TEST_CASE("wav roundtrip of a ramp stays within one LSB") {
    AudioBuffer ramp;
    ramp.sample_rate = 16000;
    ramp.samples.resize(16000);
    for (size_t i = 0; i < ramp.samples.size(); ++i)
        ramp.samples[i] = -1.0 + 2.0 * double(i) / double(ramp.samples.size() - 1);

    const auto path = temp_path("ramp.wav");
    save_wav(ramp, path);
    const AudioBuffer back = load_wav(path);
    CHECK(back.sample_rate == 16000);
    CHECK(max_abs_diff(ramp.samples, back.samples) <= std::pow(2.0, -15.0));
    std::remove(path.c_str());
}

TEST_CASE("stereo input is rejected") {
    // hand-built 2-channel header
    const auto path = temp_path("stereo.wav");
    {
        std::ofstream f(path, std::ios::binary);
        const unsigned char header[] = {
            'R', 'I', 'F', 'F', 40, 0, 0, 0, 'W', 'A', 'V', 'E',
            'f', 'm', 't', ' ', 16, 0, 0, 0,
            1, 0,              // PCM
            2, 0,              // stereo
            0x80, 0x3e, 0, 0,  // 16000 Hz
            0, 0xfa, 0, 0,
            4, 0, 16, 0,
            'd', 'a', 't', 'a', 4, 0, 0, 0, 0, 0, 0, 0};
        f.write(reinterpret_cast<const char*>(header), sizeof header);
    }
    CHECK_THROWS_WITH_AS(load_wav(path), doctest::Contains("multichannel unsupported"),
                         std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("empty or truncated file is a malformed header") {
    const auto path = temp_path("empty.wav");
    { std::ofstream f(path, std::ios::binary); }
    CHECK_THROWS_WITH_AS(load_wav(path), doctest::Contains("malformed header"),
                         std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("resample to the same rate is the identity") {
    const auto x = sine(440.0, 0.25, 16000, 0.5);
    const auto y = resample(x, 16000);
    CHECK(y.sample_rate == 16000);
    CHECK(max_abs_diff(x.samples, y.samples) == 0.0);
}

TEST_CASE("resample 48k sine to 16k keeps the spectral peak at 440 Hz") {
    const auto x = sine(440.0, 1.0, 48000, 0.5);
    const auto y = resample(x, 16000);
    CHECK(y.samples.size() == 16000);
    CHECK(std::abs(fft_peak_hz(y) - 440.0) < 1.0);
}

TEST_CASE("resample length follows round(n*to/from)") {
    AudioBuffer x;
    x.sample_rate = 48000;
    x.samples.assign(48000, 0.1);
    CHECK(resample(x, 16000).samples.size() == 16000);
    x.samples.assign(44100, 0.1);
    x.sample_rate = 44100;
    CHECK(resample(x, 16000).samples.size() == 16000);
}

TEST_CASE("round trip through 48k preserves the band below 0.45*rate") {
    auto x = white_noise(0.5, 16000, 7, 0.4);
    const auto up = resample(x, 48000);
    const auto back = resample(up, 16000);
    REQUIRE(back.samples.size() == x.samples.size());
    for (auto [lo, hi] : {std::pair{100.0, 3600.0}, {3600.0, 7200.0}, {100.0, 7200.0}}) {
        const double before = band_energy_db(x, lo, hi);
        const double after = band_energy_db(back, lo, hi);
        CHECK(std::abs(before - after) < 0.5);
    }
}

TEST_CASE("highpass removes DC") {
    AudioBuffer x;
    x.sample_rate = 16000;
    x.samples.assign(16000, 0.7);
    const auto y = highpass(x);
    for (size_t i = 8000; i < y.samples.size(); ++i) CHECK(std::abs(y.samples[i]) < 1e-3);
}

TEST_CASE("highpass attenuates 65 Hz by 3 dB") {
    const auto x = sine(65.0, 1.0, 16000, 0.5);
    const auto y = highpass(x);
    const double att = 20.0 * std::log10(tail_rms(y.samples) / tail_rms(x.samples));
    CHECK(att > -3.2);
    CHECK(att < -2.8);
}

TEST_CASE("highpass leaves 1 kHz untouched") {
    // analog prototype: |H|^2 = 1/(1+(65/1000)^10), vanishingly small loss
    const auto x = sine(1000.0, 1.0, 16000, 0.5);
    const auto y = highpass(x);
    const double att = 20.0 * std::log10(tail_rms(y.samples) / tail_rms(x.samples));
    CHECK(std::abs(att) < 0.1);
}

TEST_CASE("preemphasis of a unit impulse") {
    AudioBuffer x;
    x.sample_rate = 16000;
    x.samples = {1.0, 0.0, 0.0, 0.0};
    const auto y = preemphasis(x);
    CHECK(y.samples[0] == doctest::Approx(1.0));
    CHECK(y.samples[1] == doctest::Approx(-0.85));
    CHECK(y.samples[2] == doctest::Approx(0.0));
    CHECK(y.samples[3] == doctest::Approx(0.0));
}

TEST_CASE("deemphasis inverts preemphasis exactly") {
    for (double coef : {0.85, -0.4, 0.97, 0.0}) {
        const auto x = white_noise(0.1, 16000, 11, 0.8);
        const auto back = deemphasis(preemphasis(x, coef), coef);
        CHECK(max_abs_diff(x.samples, back.samples) < 1e-10);
    }
}

TEST_CASE("preemphasis of a constant reaches the geometric steady state") {
    AudioBuffer x;
    x.sample_rate = 16000;
    x.samples.assign(100, 1.0);
    const auto y = preemphasis(x);
    for (size_t i = 1; i < y.samples.size(); ++i)
        CHECK(y.samples[i] == doctest::Approx(0.15));
}

TEST_CASE("limiter passes zeros and quiet signals untouched") {
    AudioBuffer zeros;
    zeros.sample_rate = 16000;
    zeros.samples.assign(1000, 0.0);
    CHECK(max_abs_diff(limit(zeros).samples, zeros.samples) == 0.0);

    const auto quiet = sine(200.0, 0.25, 16000, 0.5);
    CHECK(max_abs_diff(limit(quiet).samples, quiet.samples) == 0.0);  // well under 0.1 dB
}

TEST_CASE("limiter tames a hot sine without hard-clip corners") {
    const auto x = sine(100.0, 0.5, 16000, 1.5);
    const auto y = limit(x);
    CHECK(peak_abs(y) <= 1.0);

    std::vector<double> clipped = x.samples;
    for (double& v : clipped) v = std::min(1.0, std::max(-1.0, v));
    const double dd_limited = max_second_difference(y.samples);
    const double dd_clipped = max_second_difference(clipped);
    CHECK(dd_limited < 0.5 * dd_clipped);
}

TEST_CASE("limiter is idempotent") {
    const auto x = sine(100.0, 0.3, 16000, 1.5);
    const auto once = limit(x);
    const auto twice = limit(once);
    CHECK(max_abs_diff(once.samples, twice.samples) < 1e-6);
}

TEST_CASE("quiet-signal normalization") {
    auto x = sine(200.0, 0.1, 16000, 0.1);
    const auto y = normalize_quiet(x);
    CHECK(peak_abs(y) == doctest::Approx(0.4).epsilon(1e-6));
    // already-loud input unchanged
    const auto loud = sine(200.0, 0.1, 16000, 0.5);
    CHECK(max_abs_diff(normalize_quiet(loud).samples, loud.samples) == 0.0);
    // silence unchanged
    AudioBuffer zeros;
    zeros.sample_rate = 16000;
    zeros.samples.assign(100, 0.0);
    CHECK(max_abs_diff(normalize_quiet(zeros).samples, zeros.samples) == 0.0);
    // idempotent: peak 0.4 is above the 0.2 gate
    CHECK(max_abs_diff(normalize_quiet(y).samples, y.samples) == 0.0);
}

TEST_CASE("serial and parallel resampler agree exactly") {
    const auto x = white_noise(0.3, 48000, 21, 0.5);
    const auto a = resample(x, 16000);
    const auto b = resample_serial(x, 16000);
    CHECK(max_abs_diff(a.samples, b.samples) == 0.0);
}
