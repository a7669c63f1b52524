#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "clpc/pitch.hpp"
#include "test_util.hpp"

using namespace clpc;
using namespace testutil;

TEST_CASE("quantizer endpoints and the 100 Hz bin") {
    CHECK(quantize_pitch(50.0) == 0);
    CHECK(quantize_pitch(550.0) == 255);
    // round(255 * log2(2) / log2(11)) = round(73.71)
    CHECK(quantize_pitch(100.0) == 74);
    CHECK(quantize_pitch(20.0) == 0);     // clamped
    CHECK(quantize_pitch(900.0) == 255);  // clamped
}

TEST_CASE("bin width is 16.28 cents") {
    CHECK(pitch_bin_width_cents() == doctest::Approx(16.28).epsilon(0.001));
}

TEST_CASE("quantize/dequantize roundtrip over a 1 Hz sweep stays within half a bin") {
    double worst = 0.0;
    for (int f = 50; f <= 550; ++f) {
        const double back = dequantize_pitch(quantize_pitch(double(f)));
        worst = std::max(worst, std::abs(cents_between(back, double(f))));
    }
    CHECK(worst <= 8.15);
}

TEST_CASE("dequantize then quantize is the identity on all bins") {
    for (int bin = 0; bin < 256; ++bin) CHECK(quantize_pitch(dequantize_pitch(bin)) == bin);
}

TEST_CASE("yin finds a 100 Hz sine at lag 160") {
    const auto x = sine(100.0, 0.1, 16000, 0.6);
    std::vector<double> window(x.samples.begin(), x.samples.begin() + 640);
    const auto candidates = yin_frame(window);
    REQUIRE(!candidates.empty());
    const auto best = *std::min_element(candidates.begin(), candidates.end(),
                                        [](auto& a, auto& b) { return a.cmndf < b.cmndf; });
    CHECK(std::abs(best.lag - 160.0) <= 1.0);
    CHECK(best.cmndf < 0.05);
}

TEST_CASE("yin on white noise finds no deep minima") {
    double deepest = 1.0;
    for (uint64_t seed = 1; seed <= 8; ++seed) {
        const auto x = white_noise(0.05, 16000, seed, 0.5);
        std::vector<double> window(x.samples.begin(), x.samples.begin() + 640);
        for (const auto& cand : yin_frame(window)) deepest = std::min(deepest, cand.cmndf);
    }
    CHECK(deepest > 0.3);
}

TEST_CASE("yin of an all-zero window yields no candidates") {
    CHECK(yin_frame(std::vector<double>(640, 0.0)).empty());
}

TEST_CASE("yin rejects too-short windows") {
    CHECK_THROWS_AS(yin_frame(std::vector<double>(639, 0.0)), std::invalid_argument);
}

namespace {

// shared transition weight so the oracle scores the same objective
double transition_log(int i, int j, double sigma) {
    const double cents = std::abs(i - j) * pitch_bin_width_cents();
    return -(cents * cents) / (2.0 * sigma * sigma);
}

double path_log_score(const std::vector<std::vector<double>>& emissions,
                      const std::vector<int>& path, double sigma) {
    double score = 0.0;
    for (size_t t = 0; t < path.size(); ++t) {
        const double e = emissions[t][size_t(path[t])];
        if (e <= 0.0) return -1e300;
        score += std::log(e);
        if (t > 0) score += transition_log(path[t - 1], path[t], sigma);
    }
    return score;
}

// exhaustive max-product search restricted to the active bins
std::vector<int> brute_force_path(const std::vector<std::vector<double>>& emissions,
                                  const std::vector<int>& active, double sigma) {
    const size_t frames = emissions.size();
    std::vector<int> best, current(frames);
    double best_score = -1e301;
    std::vector<size_t> choice(frames, 0);
    while (true) {
        for (size_t t = 0; t < frames; ++t) current[t] = active[choice[t]];
        const double s = path_log_score(emissions, current, sigma);
        if (s > best_score) {
            best_score = s;
            best = current;
        }
        size_t t = 0;
        while (t < frames && ++choice[t] == active.size()) choice[t++] = 0;
        if (t == frames) break;
    }
    return best;
}

}  // namespace

TEST_CASE("viterbi on a single frame is the argmax") {
    std::vector<std::vector<double>> emissions(1, std::vector<double>(256, 0.0));
    emissions[0][40] = 0.3;
    emissions[0][200] = 0.9;
    CHECK(viterbi_decode(emissions) == std::vector<int>{200});
}

TEST_CASE("viterbi with constant emissions holds a constant path") {
    std::vector<std::vector<double>> emissions(5, std::vector<double>(256, 0.0));
    for (auto& e : emissions) {
        e[100] = 0.8;
        e[130] = 0.5;
    }
    const auto path = viterbi_decode(emissions);
    for (int bin : path) CHECK(bin == 100);
}

TEST_CASE("viterbi matches brute force on octave-ambiguous frames") {
    // bins an octave apart: 74 (~100 Hz) and 148 (~201 Hz)
    const std::vector<int> active = {74, 120, 148};
    std::vector<std::vector<double>> emissions(3, std::vector<double>(256, 0.0));
    emissions[0][74] = 0.9;
    emissions[0][120] = 0.05;
    emissions[0][148] = 0.85;
    emissions[1][74] = 0.3;
    emissions[1][120] = 0.2;
    emissions[1][148] = 0.95;
    emissions[2][74] = 0.9;
    emissions[2][120] = 0.1;
    emissions[2][148] = 0.5;
    const auto vit = viterbi_decode(emissions);
    const auto brute = brute_force_path(emissions, active, 100.0);
    CHECK(vit == brute);
}

TEST_CASE("viterbi equals exhaustive search on random small instances") {
    Rng rng(1234);
    for (int trial = 0; trial < 25; ++trial) {
        const size_t frames = 1 + rng.below(4);
        const size_t nbins = 2 + rng.below(5);  // up to 6 active bins
        std::vector<int> active;
        while (active.size() < nbins) {
            const int bin = int(rng.below(256));
            if (std::find(active.begin(), active.end(), bin) == active.end())
                active.push_back(bin);
        }
        std::sort(active.begin(), active.end());
        std::vector<std::vector<double>> emissions(frames, std::vector<double>(256, 0.0));
        for (auto& frame : emissions)
            for (int bin : active) frame[size_t(bin)] = 0.05 + rng.uniform();

        const auto vit = viterbi_decode(emissions);
        const auto brute = brute_force_path(emissions, active, 100.0);
        CHECK(path_log_score(emissions, vit, 100.0) ==
              doctest::Approx(path_log_score(emissions, brute, 100.0)).epsilon(1e-12));
        CHECK(vit == brute);
    }
}

TEST_CASE("viterbi rejects an all-zero emission frame") {
    std::vector<std::vector<double>> emissions(2, std::vector<double>(256, 0.0));
    emissions[0][10] = 1.0;
    CHECK_THROWS_WITH_AS(viterbi_decode(emissions), doctest::Contains("degenerate emission"),
                         std::runtime_error);
}

TEST_CASE("dither with zero width is the identity") {
    Rng rng(5);
    CHECK(dither(200.0, rng, 0.0) == 200.0);
}

TEST_CASE("dither is unbiased and bounded to +-20 cents") {
    Rng rng(99);
    double mean_cents = 0.0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        const double out = dither(200.0, rng, 40.0);
        const double cents = cents_between(out, 200.0);
        CHECK(std::abs(cents) <= 20.0 + 1e-9);
        mean_cents += cents;
    }
    mean_cents /= draws;
    CHECK(std::abs(mean_cents) < 0.5);
}

TEST_CASE("a-weighted loudness calibration") {
    // digital silence bottoms out at the floor
    CHECK(a_weighted_loudness(std::vector<double>(320, 0.0)) <= -80.0 + 1e-9);

    // full-scale 1 kHz sine scores 20 dB (20 cycles fit exactly)
    std::vector<double> calib(320);
    for (size_t i = 0; i < calib.size(); ++i)
        calib[i] = std::sin(2.0 * kPi * 1000.0 * double(i) / 16000.0);
    CHECK(std::abs(a_weighted_loudness(calib) - 20.0) < 0.5);

    // 100 Hz sits 19.1 dB down the A-curve
    std::vector<double> low(320);
    for (size_t i = 0; i < low.size(); ++i)
        low[i] = std::sin(2.0 * kPi * 100.0 * double(i) / 16000.0);
    CHECK(std::abs(a_weighted_loudness(low) - (20.0 - 19.1)) < 1.0);
}

TEST_CASE("periodicity gate") {
    PitchContour contour;
    contour.f0_hz = {100.0, 150.0, 200.0};
    contour.periodicity = {0.9, 0.8, 0.7};

    SUBCASE("all loud frames pass unchanged") {
        const auto out = gate_periodicity(contour, {-10.0, -20.0, -59.9});
        CHECK(out.periodicity == contour.periodicity);
    }
    SUBCASE("quiet frames are zeroed") {
        const auto out = gate_periodicity(contour, {-70.0, -70.0, -70.0});
        for (double p : out.periodicity) CHECK(p == 0.0);
    }
    SUBCASE("mixed frames only change where quiet") {
        const auto out = gate_periodicity(contour, {-10.0, -61.0, -10.0});
        CHECK(out.periodicity[0] == 0.9);
        CHECK(out.periodicity[1] == 0.0);
        CHECK(out.periodicity[2] == 0.7);
    }
    SUBCASE("gating is idempotent and never increases periodicity") {
        const std::vector<double> loud = {-10.0, -61.0, -10.0};
        const auto once = gate_periodicity(contour, loud);
        const auto twice = gate_periodicity(once, loud);
        CHECK(once.periodicity == twice.periodicity);
        for (size_t i = 0; i < 3; ++i) CHECK(once.periodicity[i] <= contour.periodicity[i]);
    }
}

TEST_CASE("tracker locks onto a 100 Hz sine") {
    const auto x = sine(100.0, 1.0, 16000, 0.6);
    const auto contour = track(x);
    REQUIRE(contour.frames() == 100);

    std::vector<double> f0 = contour.f0_hz;
    std::sort(f0.begin(), f0.end());
    CHECK(std::abs(cents_between(f0[f0.size() / 2], 100.0)) < 10.0);

    std::vector<double> p = contour.periodicity;
    std::sort(p.begin(), p.end());
    CHECK(p[p.size() / 2] > 0.9);
}

TEST_CASE("tracker reports low periodicity on white noise") {
    const auto x = white_noise(1.0, 16000, 3, 0.5);
    const auto contour = track(x);
    double mean = 0.0;
    for (double p : contour.periodicity) mean += p;
    mean /= double(contour.frames());
    CHECK(mean < 0.3);
}

TEST_CASE("tracker gates silence to zero periodicity") {
    AudioBuffer x;
    x.sample_rate = 16000;
    x.samples.assign(4800, 0.0);
    const auto contour = track(x);
    for (double p : contour.periodicity) CHECK(p == 0.0);
}

TEST_CASE("tracker frame count is ceil(samples/160)") {
    for (size_t n : {size_t(1), size_t(159), size_t(160), size_t(161), size_t(1600)}) {
        AudioBuffer x;
        x.sample_rate = 16000;
        x.samples.assign(n, 0.0);
        CHECK(track(x).frames() == (n + 159) / 160);
    }
}
