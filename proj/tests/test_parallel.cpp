// Serial reference implementations are kept alongside the OpenMP kernels;
// these tests pin them to bit-identical agreement.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "clpc/features.hpp"
#include "clpc/pitch.hpp"
#include "test_util.hpp"

using namespace clpc;
using namespace testutil;

namespace {

AudioBuffer mixed_signal() {
    auto vowel = synthetic_vowel(140.0, 0.6);
    const auto noise = white_noise(0.6, 16000, 77, 0.05);
    for (size_t i = 0; i < vowel.samples.size(); ++i) vowel.samples[i] += noise.samples[i];
    return vowel;
}

}  // namespace

TEST_CASE("frame emissions agree between serial and parallel kernels") {
    const auto x = mixed_signal();
    TrackerOptions opt;
    std::vector<std::vector<YinCandidate>> cand_par, cand_ser;
    const auto par = frame_emissions(x, opt, &cand_par);
    const auto ser = frame_emissions_serial(x, opt, &cand_ser);
    REQUIRE(par.size() == ser.size());
    for (size_t t = 0; t < par.size(); ++t) {
        REQUIRE(par[t].size() == ser[t].size());
        for (size_t b = 0; b < par[t].size(); ++b) CHECK(par[t][b] == ser[t][b]);
        REQUIRE(cand_par[t].size() == cand_ser[t].size());
        for (size_t c = 0; c < cand_par[t].size(); ++c) {
            CHECK(cand_par[t][c].lag == cand_ser[t][c].lag);
            CHECK(cand_par[t][c].cmndf == cand_ser[t][c].cmndf);
        }
    }
}

TEST_CASE("frame loudness agrees between serial and parallel kernels") {
    const auto x = mixed_signal();
    TrackerOptions opt;
    const auto par = frame_loudness(x, opt);
    const auto ser = frame_loudness_serial(x, opt);
    REQUIRE(par.size() == ser.size());
    for (size_t t = 0; t < par.size(); ++t) CHECK(par[t] == ser[t]);
}

TEST_CASE("bfcc frames agree between serial and parallel kernels") {
    const auto x = mixed_signal();
    const auto par = bfcc_frames(x, true);
    const auto ser = bfcc_frames_serial(x);
    REQUIRE(par.size() == ser.size());
    for (size_t t = 0; t < par.size(); ++t)
        for (int i = 0; i < kNumBands; ++i) CHECK(par[t][size_t(i)] == ser[t][size_t(i)]);
}

TEST_CASE("full tracker output is identical with parallelism disabled") {
    const auto x = mixed_signal();
    TrackerOptions par_opt;
    TrackerOptions ser_opt;
    ser_opt.parallel = false;
    const auto a = track(x, par_opt);
    const auto b = track(x, ser_opt);
    REQUIRE(a.frames() == b.frames());
    for (size_t t = 0; t < a.frames(); ++t) {
        CHECK(a.f0_hz[t] == b.f0_hz[t]);
        CHECK(a.periodicity[t] == b.periodicity[t]);
    }
}
