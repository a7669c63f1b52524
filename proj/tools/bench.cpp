// Benchmarks the OpenMP analysis kernels against their serial references.

#include <chrono>
#include <cmath>
#include <cstdio>

#include "clpc/features.hpp"
#include "clpc/pitch.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace clpc;

namespace {

AudioBuffer bench_signal(double seconds) {
    AudioBuffer x;
    x.sample_rate = kTargetRate;
    const size_t n = size_t(seconds * kTargetRate);
    x.samples.resize(n);
    double phase = 0.0;
    uint64_t state = 0x9e3779b97f4a7c15ull;
    for (size_t i = 0; i < n; ++i) {
        const double f0 = 120.0 + 60.0 * std::sin(2.0 * 3.14159265358979 * double(i) / n);
        phase += f0 / kTargetRate;
        if (phase >= 1.0) phase -= 1.0;
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        const double noise = double(state >> 11) * 0x1.0p-53 - 0.5;
        x.samples[i] = 0.4 * (2.0 * phase - 1.0) + 0.05 * noise;
    }
    return x;
}

template <class F>
double time_ms(F&& fn, int reps = 3) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto start = std::chrono::steady_clock::now();
        fn();
        const auto stop = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(stop - start).count());
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-18s serial %8.1f ms   parallel %8.1f ms   speedup %.2fx\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; parallel paths run serially\n");
#endif
    const auto x = bench_signal(8.0);
    std::printf("signal: %.1f s at %d Hz (%zu frames)\n", x.duration_s(), x.sample_rate,
                (x.samples.size() + 159) / 160);

    TrackerOptions opt;
    report("yin emissions",
           time_ms([&] { frame_emissions_serial(x, opt); }),
           time_ms([&] { frame_emissions(x, opt); }));
    report("loudness",
           time_ms([&] { frame_loudness_serial(x, opt); }),
           time_ms([&] { frame_loudness(x, opt); }));
    report("bfcc frames",
           time_ms([&] { bfcc_frames_serial(x); }),
           time_ms([&] { bfcc_frames(x, true); }));
    report("resample to 48k",
           time_ms([&] { resample_serial(x, 48000); }),
           time_ms([&] { resample(x, 48000); }));
    return 0;
}
