#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "clpc/augment.hpp"
#include "clpc/pitch.hpp"
#include "test_util.hpp"

using namespace clpc;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

double tracked_median_f0(const AudioBuffer& x) {
    const auto contour = track(x);
    std::vector<double> voiced;
    for (size_t f = 0; f < contour.frames(); ++f)
        if (contour.periodicity[f] > 0.5) voiced.push_back(contour.f0_hz[f]);
    REQUIRE(!voiced.empty());
    std::sort(voiced.begin(), voiced.end());
    return voiced[voiced.size() / 2];
}

}  // namespace

TEST_CASE("ratio 1 is a plain resample to 16 kHz") {
    const auto x = sine(200.0, 0.5, 48000, 0.5);
    const auto direct = resample(x, 16000);
    const auto aug = resample_augment(x, 1.0);
    REQUIRE(aug.samples.size() == direct.samples.size());
    for (size_t i = 0; i < aug.samples.size(); ++i) CHECK(aug.samples[i] == direct.samples[i]);
}

TEST_CASE("ratio 2 halves the duration and doubles the pitch") {
    const auto x = sine(200.0, 1.0, 48000, 0.5);
    const auto out = resample_augment(x, 2.0);
    CHECK(std::abs(double(out.samples.size()) - 8000.0) <= 1.0);
    CHECK(std::abs(cents_between(tracked_median_f0(out), 400.0)) < 5.0);
}

TEST_CASE("output length composes the two resampling stages") {
    for (double ratio : kAugmentRatios) {
        const auto x = sine(220.0, 0.37, 48000, 0.5);
        const auto out = resample_augment(x, ratio);
        const long long stage1 = llround(double(x.samples.size()) / ratio);
        const long long expected = llround(double(stage1) * 16000.0 / 48000.0);
        CHECK(llabs((long long)out.samples.size() - expected) <= 1);
    }
}

TEST_CASE("every standard ratio scales pitch and duration as specified") {
    const auto x = synthetic_vowel(200.0, 1.0, 48000, 0.4);
    const double source_f0 = tracked_median_f0(resample(x, 16000));
    for (double ratio : kAugmentRatios) {
        const auto out = resample_augment(x, ratio);
        // pitch within 10 cents of ratio * source
        const double f0 = tracked_median_f0(out);
        CHECK(std::abs(cents_between(f0, source_f0 * ratio)) < 10.0);
        // duration within 1 ms of source / ratio
        const double expected_s = 1.0 / ratio;
        CHECK(std::abs(out.duration_s() - expected_s) < 0.001);
    }
}

TEST_CASE("a ratio and its inverse compose back to the source duration") {
    const auto x = sine(200.0, 0.5, 16000, 0.5);
    for (double ratio : {2.0, 1.5, 4.0 / 3.0, 1.25}) {
        const auto once = resample_augment(x, ratio);
        const auto back = resample_augment(once, 1.0 / ratio);
        CHECK(llabs((long long)back.samples.size() - (long long)x.samples.size()) <= 2);
    }
}

TEST_CASE("corpus augmentation writes 9 outputs per readable file") {
    const std::string dir_in = "/tmp/clpc_aug_in";
    const std::string dir_out = "/tmp/clpc_aug_out";
    fs::remove_all(dir_in);
    fs::remove_all(dir_out);
    fs::create_directories(dir_in);

    for (int i = 0; i < 3; ++i)
        save_wav(sine(180.0 + 20.0 * i, 0.2, 16000, 0.4),
                 dir_in + "/tone" + std::to_string(i) + ".wav");
    {  // an unreadable file that must be skipped with a log entry
        std::ofstream bad(dir_in + "/broken.wav", std::ios::binary);
        bad << "junk";
    }

    const auto manifest = augment_corpus(dir_in, dir_out);
    CHECK(manifest.size() == 27);
    for (const auto& row : manifest) CHECK(fs::exists(row.output));
    CHECK(fs::exists(dir_out + "/manifest.csv"));

    fs::remove_all(dir_in);
    fs::remove_all(dir_out);
}

TEST_CASE("an empty corpus yields an empty manifest and succeeds") {
    const std::string dir_in = "/tmp/clpc_aug_empty_in";
    const std::string dir_out = "/tmp/clpc_aug_empty_out";
    fs::remove_all(dir_in);
    fs::remove_all(dir_out);
    fs::create_directories(dir_in);
    CHECK(augment_corpus(dir_in, dir_out).empty());
    CHECK(fs::exists(dir_out + "/manifest.csv"));
    fs::remove_all(dir_in);
    fs::remove_all(dir_out);
}

TEST_CASE("non-positive ratios are rejected") {
    const auto x = sine(200.0, 0.1, 16000, 0.5);
    CHECK_THROWS_AS(resample_augment(x, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(resample_augment(x, -2.0), std::invalid_argument);
}
