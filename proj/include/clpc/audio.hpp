#pragma once

#include <string>
#include <vector>

namespace clpc {

// Mono sample sequence. Samples are nominally in [-1, 1]; the limiter
// stage enforces the bound.
struct AudioBuffer {
    std::vector<double> samples;
    int sample_rate = 16000;

    size_t size() const { return samples.size(); }
    double duration_s() const {
        return sample_rate > 0 ? double(samples.size()) / sample_rate : 0.0;
    }
};

constexpr int kTargetRate = 16000;
constexpr int kHop = 160;  // 10 ms at 16 kHz

// --- WAV file I/O (RIFF, 16-bit PCM, mono) ---------------------------------

AudioBuffer load_wav(const std::string& path);
void save_wav(const AudioBuffer& buffer, const std::string& path);

// --- Rate conversion --------------------------------------------------------

// Band-limited resampling (Kaiser-windowed sinc, 64 taps per phase).
// Output length is round(n * to / from).
AudioBuffer resample(const AudioBuffer& x, int to_rate);

// Reference implementation of the same kernel without the OpenMP loop.
AudioBuffer resample_serial(const AudioBuffer& x, int to_rate);

// Same kernel, with the source rate given explicitly (used by the
// resampling augmentation, where the buffer is reinterpreted at r*s).
AudioBuffer resample_from(const std::vector<double>& samples, double from_rate, int to_rate);

// --- Conditioning chain -----------------------------------------------------

// 5th-order Butterworth high-pass, 65 Hz cutoff, cascaded second-order
// sections. Expects 16 kHz input.
AudioBuffer highpass(const AudioBuffer& x);

// y[t] = x[t] - coef * x[t-1], and its exact inverse.
AudioBuffer preemphasis(const AudioBuffer& x, double coef = 0.85);
AudioBuffer deemphasis(const AudioBuffer& y, double coef = 0.85);

// Look-ahead gain limiter: threshold 0.99, 1 ms attack, 100 ms release.
// Signals that never exceed the threshold pass through unchanged, so the
// operation is idempotent.
AudioBuffer limit(const AudioBuffer& x);

// Utterances with peak below 0.2 are scaled to a peak of 0.4.
AudioBuffer normalize_quiet(const AudioBuffer& x);

struct PreprocessOptions {
    int sample_rate = kTargetRate;
    bool apply_highpass = true;
    double preemphasis_coef = 0.85;
};

// Full conditioning chain: resample -> high-pass -> quiet normalization ->
// preemphasis -> limiter. Analysis and synthesis both run in this domain;
// deemphasis is applied on the way back out.
AudioBuffer preprocess(const AudioBuffer& x, const PreprocessOptions& opt = {});

double peak_abs(const AudioBuffer& x);

}  // namespace clpc
